use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Head, Prepared};
use crate::error::{Error, Result};
use crate::eval::metrics::auroc;

/// SGD recipe: linear warm-up to the peak rate, then multiplicative decay
/// whenever validation AUROC stalls.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub plateau_factor: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weight_decay: 1e-3,
            batch_size: 16,
            epochs: 300,
            peak_lr: 1e-3,
            warmup_epochs: 100,
            plateau_factor: 0.95,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.peak_lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("peak_lr must be positive and weight_decay non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau_factor must lie in (0, 1]");
        }
        if self.warmup_epochs >= self.epochs {
            return bad("warmup_epochs must be smaller than epochs");
        }
        Ok(())
    }
}

/// Learning-rate schedule. Epochs are 1-based; plateau monitoring only
/// starts once warm-up is over.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    peak: f64,
    warmup: usize,
    factor: f64,
    patience: usize,
    current: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl LrSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            peak: cfg.peak_lr,
            warmup: cfg.warmup_epochs,
            factor: cfg.plateau_factor,
            patience: cfg.patience,
            current: cfg.peak_lr,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Rate used during `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch <= self.warmup {
            self.peak * epoch as f64 / self.warmup as f64
        } else {
            self.current
        }
    }

    /// Feeds the validation score measured at the end of `epoch`.
    pub fn observe(&mut self, epoch: usize, val_auroc: f64) {
        if epoch <= self.warmup {
            return;
        }
        match self.best {
            Some(b) if val_auroc <= b => {
                self.bad_epochs += 1;
                if self.bad_epochs > self.patience {
                    self.current *= self.factor;
                    self.bad_epochs = 0;
                }
            }
            _ => {
                self.best = Some(val_auroc);
                self.bad_epochs = 0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_auroc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedHead {
    /// Snapshot with the best validation AUROC.
    pub head: Head,
    pub best_epoch: usize,
    pub best_val_auroc: f64,
    pub trace: Vec<EpochRecord>,
}

impl TrainedHead {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_auroc\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.lr, r.train_loss, r.val_auroc
            ));
        }
        out
    }
}

/// Prepared inputs and binary labels for a whole dataset.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub inputs: Vec<Prepared>,
    pub labels: Vec<u8>,
}

impl TrainSet {
    pub fn new(inputs: Vec<Prepared>, labels: Vec<u8>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::invalid("input and label counts differ"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be binary"));
        }
        Ok(Self { inputs, labels })
    }

    pub fn logits(&self, head: &Head, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| head.forward_prepared(&self.inputs[i])).collect()
    }

    fn labels_of(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

fn has_both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

/// Mini-batch SGD with coupled L2 weight decay on every parameter.
pub fn train(
    mut head: Head,
    data: &TrainSet,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainedHead> {
    cfg.validate()?;
    if !has_both_classes(&data.labels_of(train_idx)) {
        return Err(Error::invalid("training split contains a single class"));
    }
    let val_labels = data.labels_of(val_idx);
    if !has_both_classes(&val_labels) {
        return Err(Error::invalid("validation split contains a single class"));
    }
    if let Some(x) = data.inputs.first() {
        if x.width != head.width() {
            return Err(Error::invalid(format!(
                "input width {} does not match head width {}",
                x.width,
                head.width()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut schedule = LrSchedule::new(cfg);
    let mut order = train_idx.to_vec();
    let mut grad = vec![0.0; head.n_params()];
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Head)> = None;

    for epoch in 1..=cfg.epochs {
        let lr = schedule.lr(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                loss_sum += head.loss_and_grad(&data.inputs[i], data.labels[i], &mut grad);
            }
            let inv = 1.0 / batch.len() as f64;
            for (p, g) in head.params_mut().iter_mut().zip(&grad) {
                *p -= lr * (g * inv + cfg.weight_decay * *p);
            }
        }
        if head.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let val_auroc = auroc(&data.logits(&head, val_idx), &val_labels)?;
        trace.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / order.len() as f64,
            val_auroc,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_auroc > *b) {
            best = Some((epoch, val_auroc, head.clone()));
        }
        schedule.observe(epoch, val_auroc);
    }

    let (best_epoch, best_val_auroc, head) = best.expect("at least one epoch");
    Ok(TrainedHead {
        head,
        best_epoch,
        best_val_auroc,
        trace,
    })
}

/// Largest relative gap between the analytic loss gradient and central
/// finite differences (step 1e-5).
pub fn grad_check(head: &Head, x: &Prepared, label: u8) -> f64 {
    let mut analytic = vec![0.0; head.n_params()];
    head.loss_and_grad(x, label, &mut analytic);
    let step = 1e-5;
    let mut probe = head.clone();
    let mut scratch = vec![0.0; head.n_params()];
    let mut loss_at = |probe: &Head| {
        scratch.iter_mut().for_each(|g| *g = 0.0);
        probe.loss_and_grad(x, label, &mut scratch)
    };
    let mut worst = 0.0_f64;
    for k in 0..head.n_params() {
        let orig = head.params()[k];
        probe.params_mut()[k] = orig + step;
        let plus = loss_at(&probe);
        probe.params_mut()[k] = orig - step;
        let minus = loss_at(&probe);
        probe.params_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear() {
        let s = LrSchedule::new(&TrainConfig::default());
        assert_eq!(s.lr(50), 0.0005);
        assert_eq!(s.lr(100), 0.001);
        assert_eq!(s.lr(1), 0.00001);
    }

    #[test]
    fn plateau_decays_once_after_six_flat_epochs() {
        let cfg = TrainConfig::default();
        let mut s = LrSchedule::new(&cfg);
        for e in 1..=100 {
            s.observe(e, 0.5 + e as f64 * 1e-3);
        }
        s.observe(101, 0.7);
        for e in 102..=106 {
            s.observe(e, 0.7);
            assert_eq!(s.lr(e + 1), 0.001);
        }
        s.observe(107, 0.69);
        assert_eq!(s.lr(108), 0.001 * 0.95);
        // Counter resets after a decay.
        for e in 108..=112 {
            s.observe(e, 0.7);
            assert_eq!(s.lr(e + 1), 0.001 * 0.95);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            warmup_epochs: 300,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
