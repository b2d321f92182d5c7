//! Classification heads on top of per-slice features.
//!
//! Both heads share one computation: a ReLU layer applied row-wise, a mean
//! over rows, and a linear output. For the graph head the rows are the nodes
//! and each row is `[x_i | weighted mean of neighbours | max of neighbours]`;
//! for the MLP baseline there is a single row holding all slice features
//! concatenated in stack order.

mod train;

pub use train::{
    grad_check, train, EpochRecord, LrSchedule, TrainConfig, TrainSet, TrainedHead,
};

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::FeatureMatrix;
use crate::error::{Error, Result};
use crate::graph::ViewGraph;

/// Trainable-parameter ceiling shared by every head.
pub const PARAM_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadKind {
    Sage,
    Mlp,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Sage => "sage",
            HeadKind::Mlp => "mlp",
        }
    }

    /// Width of one input row for `n` slices of dimension `d`.
    pub fn input_width(self, d: usize, n: usize) -> usize {
        match self {
            HeadKind::Sage => 3 * d,
            HeadKind::Mlp => n * d,
        }
    }

    /// Largest hidden width whose parameter count fits `budget`.
    pub fn max_hidden(self, d: usize, n: usize, budget: usize) -> usize {
        let width = self.input_width(d, n);
        budget.saturating_sub(1) / (width + 2)
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sage" => Ok(HeadKind::Sage),
            "mlp" => Ok(HeadKind::Mlp),
            _ => Err(Error::invalid(format!("unknown head `{s}`"))),
        }
    }
}

/// Input rows for one sample, laid out `rows x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Prepared {
    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// Node rows `[x_i | mean | max]` for the graph head.
///
/// The mean is weighted by edge weight; the max runs over neighbours with
/// positive weight and ignores the magnitude. A node without neighbours gets
/// zero vectors for both.
pub fn aggregate_neighbors(features: &FeatureMatrix, graph: &ViewGraph) -> Result<Prepared> {
    let n = features.rows();
    let d = features.dim();
    if graph.n_nodes != n {
        return Err(Error::invalid(format!(
            "graph has {} nodes but there are {n} feature rows",
            graph.n_nodes
        )));
    }
    let width = 3 * d;
    let mut data = vec![0.0; n * width];
    for i in 0..n {
        let row = &mut data[i * width..(i + 1) * width];
        for (dst, &x) in row[..d].iter_mut().zip(features.row(i)) {
            *dst = x as f64;
        }
        let (_, rest) = row.split_at_mut(d);
        let (mean, max) = rest.split_at_mut(d);
        let nbrs: Vec<(usize, f64)> = (0..n)
            .map(|j| (j, graph.weight(i, j)))
            .filter(|&(j, w)| j != i && w > 0.0)
            .collect();
        if nbrs.is_empty() {
            continue;
        }
        let mut weights: Vec<f64> = nbrs.iter().map(|&(_, w)| w).collect();
        let total = order_free_sum(&mut weights);
        let mut terms = vec![0.0; nbrs.len()];
        for k in 0..d {
            let mut mx = f64::NEG_INFINITY;
            for (t, &(j, w)) in terms.iter_mut().zip(&nbrs) {
                let x = features.row(j)[k] as f64;
                *t = w * x;
                mx = mx.max(x);
            }
            mean[k] = order_free_sum(&mut terms) / total;
            max[k] = mx;
        }
    }
    Ok(Prepared {
        rows: n,
        width,
        data,
    })
}

/// Sums after sorting, so any permutation of `values` gives the same bits.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// All slice features in stack order as a single row.
pub fn concatenate(features: &FeatureMatrix) -> Prepared {
    Prepared {
        rows: 1,
        width: features.rows() * features.dim(),
        data: features.data().iter().map(|&x| x as f64).collect(),
    }
}

/// A two-layer head. Parameters live in one flat vector:
/// `W (hidden x width) | b (hidden) | r (hidden) | c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub kind: HeadKind,
    /// Per-slice feature dimension.
    pub dim: usize,
    /// Number of slices (graph nodes) the head was built for.
    pub n_slices: usize,
    pub hidden: usize,
    width: usize,
    params: Vec<f64>,
}

pub type SageHead = Head;
pub type MlpHead = Head;

/// Parameter count of a head with the given shape.
pub fn param_count(kind: HeadKind, dim: usize, n_slices: usize, hidden: usize) -> usize {
    (kind.input_width(dim, n_slices) + 1) * hidden + hidden + 1
}

impl Head {
    /// Zero-initialised head; rejects shapes over the parameter budget.
    pub fn zeros(kind: HeadKind, dim: usize, n_slices: usize, hidden: usize) -> Result<Self> {
        if dim == 0 || n_slices == 0 || hidden == 0 {
            return Err(Error::invalid("head dimensions must be positive"));
        }
        let count = param_count(kind, dim, n_slices, hidden);
        if count > PARAM_BUDGET {
            return Err(Error::invalid(format!(
                "{kind} head with D={dim}, N={n_slices}, H={hidden} has {count} parameters (budget {PARAM_BUDGET})"
            )));
        }
        Ok(Self {
            kind,
            dim,
            n_slices,
            hidden,
            width: kind.input_width(dim, n_slices),
            params: vec![0.0; count],
        })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation per layer.
    pub fn init(kind: HeadKind, dim: usize, n_slices: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut head = Self::zeros(kind, dim, n_slices, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = 1.0 / (head.width as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let split = (head.width + 1) * hidden;
        for (k, p) in head.params.iter_mut().enumerate() {
            let bound = if k < split { b1 } else { b2 };
            *p = rng.random_range(-bound..bound);
        }
        Ok(head)
    }

    /// Default hidden width: the largest that fits the parameter budget.
    pub fn with_budget(kind: HeadKind, dim: usize, n_slices: usize, seed: u64) -> Result<Self> {
        let hidden = kind.max_hidden(dim, n_slices, PARAM_BUDGET);
        Self::init(kind, dim, n_slices, hidden, seed)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (w, rest) = self.params.split_at(self.hidden * self.width);
        let (b, rest) = rest.split_at(self.hidden);
        let (r, c) = rest.split_at(self.hidden);
        (w, b, r, c[0])
    }

    /// Builds the input rows this head expects.
    pub fn prepare(&self, features: &FeatureMatrix, graph: Option<&ViewGraph>) -> Result<Prepared> {
        if features.dim() != self.dim {
            return Err(Error::invalid(format!(
                "feature dimension {} does not match head dimension {}",
                features.dim(),
                self.dim
            )));
        }
        match self.kind {
            HeadKind::Sage => {
                let graph = graph.ok_or_else(|| Error::invalid("graph head needs a graph"))?;
                aggregate_neighbors(features, graph)
            }
            HeadKind::Mlp => {
                if features.rows() != self.n_slices {
                    return Err(Error::invalid(format!(
                        "MLP head expects {} slices, got {}",
                        self.n_slices,
                        features.rows()
                    )));
                }
                Ok(concatenate(features))
            }
        }
    }

    fn hidden_pre(&self, x: &Prepared, r: usize, out: &mut [f64]) {
        let (w, b, _, _) = self.split();
        let row = x.row(r);
        for (j, o) in out.iter_mut().enumerate() {
            let wj = &w[j * self.width..(j + 1) * self.width];
            *o = b[j] + wj.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn forward_prepared(&self, x: &Prepared) -> f64 {
        debug_assert_eq!(x.width, self.width);
        let (_, _, r, c) = self.split();
        let h = self.hidden;
        // Activations stored unit-major so each unit's pooling sum can be
        // taken in an order that does not depend on the row order.
        let mut act = vec![0.0; h * x.rows];
        let mut z = vec![0.0; h];
        for row in 0..x.rows {
            self.hidden_pre(x, row, &mut z);
            for (j, &zj) in z.iter().enumerate() {
                act[j * x.rows + row] = zj.max(0.0);
            }
        }
        let inv = 1.0 / x.rows as f64;
        c + act
            .chunks_mut(x.rows)
            .zip(r)
            .map(|(a, rj)| order_free_sum(a) * inv * rj)
            .sum::<f64>()
    }

    /// Adds `dlogit * d(logit)/d(params)` into `grad`.
    pub fn backward_prepared(&self, x: &Prepared, dlogit: f64, grad: &mut [f64]) {
        let (_, _, r, _) = self.split();
        let h = self.hidden;
        let inv = 1.0 / x.rows as f64;
        let (gw, rest) = grad.split_at_mut(h * self.width);
        let (gb, rest) = rest.split_at_mut(h);
        let (gr, gc) = rest.split_at_mut(h);
        gc[0] += dlogit;
        let mut z = vec![0.0; h];
        for row in 0..x.rows {
            self.hidden_pre(x, row, &mut z);
            let input = x.row(row);
            for j in 0..h {
                if z[j] <= 0.0 {
                    continue;
                }
                gr[j] += dlogit * z[j] * inv;
                let dz = dlogit * r[j] * inv;
                gb[j] += dz;
                for (g, &xi) in gw[j * self.width..(j + 1) * self.width].iter_mut().zip(input) {
                    *g += dz * xi;
                }
            }
        }
    }

    /// Binary cross-entropy of one sample; accumulates its gradient into `grad`.
    pub fn loss_and_grad(&self, x: &Prepared, label: u8, grad: &mut [f64]) -> f64 {
        let h = self.hidden;
        let mut z = vec![0.0; x.rows * h];
        for row in 0..x.rows {
            self.hidden_pre(x, row, &mut z[row * h..(row + 1) * h]);
        }
        let (_, _, r, c) = self.split();
        let inv = 1.0 / x.rows as f64;
        let mut logit = c;
        for row in 0..x.rows {
            for j in 0..h {
                logit += z[row * h + j].max(0.0) * inv * r[j];
            }
        }
        let y = label as f64;
        let dlogit = sigmoid(logit) - y;

        let (gw, rest) = grad.split_at_mut(h * self.width);
        let (gb, rest) = rest.split_at_mut(h);
        let (gr, gc) = rest.split_at_mut(h);
        gc[0] += dlogit;
        for row in 0..x.rows {
            let input = x.row(row);
            for j in 0..h {
                let zj = z[row * h + j];
                if zj <= 0.0 {
                    continue;
                }
                gr[j] += dlogit * zj * inv;
                let dz = dlogit * r[j] * inv;
                gb[j] += dz;
                for (g, &xi) in gw[j * self.width..(j + 1) * self.width].iter_mut().zip(input) {
                    *g += dz * xi;
                }
            }
        }
        bce_with_logits(logit, y)
    }

    pub fn forward(&self, features: &FeatureMatrix, graph: Option<&ViewGraph>) -> Result<f64> {
        Ok(self.forward_prepared(&self.prepare(features, graph)?))
    }

    /// Header `TRAINEDHEAD <kind> <D> <H> <N>`, then little-endian f64 parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "TRAINEDHEAD {} {} {} {}\n",
            self.kind, self.dim, self.hidden, self.n_slices
        )
        .into_bytes();
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::malformed("head file", "missing header"))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::malformed("head file", "header is not ASCII"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 5 || f[0] != "TRAINEDHEAD" {
            return Err(Error::malformed("head file", format!("`{header}`")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::malformed("head file", format!("bad number `{s}`")))
        };
        let kind: HeadKind = f[1].parse()?;
        let mut head = Self::zeros(kind, num(f[2])?, num(f[4])?, num(f[3])?)?;
        let payload = &bytes[nl + 1..];
        if payload.len() != head.params.len() * 8 {
            return Err(Error::malformed(
                "head file",
                format!("expected {} parameter bytes, found {}", head.params.len() * 8, payload.len()),
            ));
        }
        for (p, c) in head.params.iter_mut().zip(payload.chunks_exact(8)) {
            *p = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
        }
        if head.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter in head file".into()));
        }
        Ok(head)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y log s(z) + (1-y) log(1-s(z))]`, evaluated without overflow.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}
