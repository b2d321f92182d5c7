//! Binary classification metrics.

use crate::error::{Error, Result};

/// Rank-based AUROC (Mann-Whitney U); tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.iter().filter(|&&l| l == 0).count();
    if n_pos + n_neg != labels.len() {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (average) ranks of the positives, 1-based.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn from_predictions(preds: &[u8], labels: &[u8]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::invalid("prediction and label lengths differ"));
        }
        if preds.is_empty() {
            return Err(Error::invalid("metrics of an empty prediction set"));
        }
        let mut c = Confusion::default();
        for (&p, &l) in preds.iter().zip(labels) {
            match (p, l) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.r#fn += 1,
                _ => return Err(Error::invalid("predictions and labels must be 0 or 1")),
            }
        }
        Ok(c)
    }

    fn mcc_denominator(&self) -> f64 {
        let (tp, fp, tn, fne) = (
            self.tp as f64,
            self.fp as f64,
            self.tn as f64,
            self.r#fn as f64,
        );
        ((tp + fp) * (tp + fne) * (tn + fp) * (tn + fne)).sqrt()
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let den = self.mcc_denominator();
        if den == 0.0 {
            return 0.0;
        }
        let num = self.tp as f64 * self.tn as f64 - self.fp as f64 * self.r#fn as f64;
        num / den
    }

    pub fn mcc_degenerate(&self) -> bool {
        self.mcc_denominator() == 0.0
    }

    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.r#fn;
        if den == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / den as f64
        }
    }

    pub fn f1_degenerate(&self) -> bool {
        2 * self.tp + self.fp + self.r#fn == 0
    }

    /// Mean of sensitivity and specificity, over the classes present.
    pub fn balanced_accuracy(&self) -> f64 {
        let pos = self.tp + self.r#fn;
        let neg = self.tn + self.fp;
        let mut recalls = Vec::with_capacity(2);
        if pos > 0 {
            recalls.push(self.tp as f64 / pos as f64);
        }
        if neg > 0 {
            recalls.push(self.tn as f64 / neg as f64);
        }
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

pub fn mcc(preds: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(Confusion::from_predictions(preds, labels)?.mcc())
}

pub fn balanced_accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(Confusion::from_predictions(preds, labels)?.balanced_accuracy())
}

pub fn f1(preds: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(Confusion::from_predictions(preds, labels)?.f1())
}

/// Thresholds logits at 0 (probability 0.5).
pub fn predictions_from_logits(logits: &[f64]) -> Vec<u8> {
    logits.iter().map(|&z| u8::from(z > 0.0)).collect()
}
