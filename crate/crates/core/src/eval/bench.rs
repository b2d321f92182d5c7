//! Cross-validated comparison of slicing strategies, heads and graph settings
//! on a synthetic phantom set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use super::folds::make_folds;
use super::metrics::{auroc, predictions_from_logits, Confusion};
use super::phantom::{generate_phantom, Phantom, PhantomSetSpec};
use crate::config::KeyValues;
use crate::encoder::{BuiltinEncoder, FeatureMatrix};
use crate::error::{Error, Result};
use crate::graph::{Topology, ViewGraph, Weighting};
use crate::model::{aggregate_neighbors, concatenate, train, Head, HeadKind, TrainConfig, TrainSet};
use crate::slicer::{slice_volume, SliceOptions, Strategy};
use crate::sphere::{canonical_points, optimize, OptimizeParams, SpherePointSet};
use crate::volume::Interp;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub phantoms: PhantomSetSpec,
    pub strategies: Vec<Strategy>,
    pub views: Vec<usize>,
    pub heads: Vec<HeadKind>,
    /// Only used by graph heads.
    pub topologies: Vec<Topology>,
    pub weightings: Vec<Weighting>,
    /// Seed of the sphere sampler; omni slicing needs one.
    pub sphere_seed: Option<u64>,
    /// Coarsen z to this spacing and resample back before slicing.
    pub anisotropic_z: Option<f64>,
    pub slice_size: usize,
    pub encoder_dim: usize,
    pub encoder_seed: u64,
    /// Hidden width; `None` uses the largest width within the budget.
    pub hidden: Option<usize>,
    pub train: TrainConfig,
    pub folds: usize,
    pub fold_seed: u64,
    /// Seeds head initialisation and batch order.
    pub seed: u64,
    /// Record wall-clock training time. Off by default so output files are
    /// byte-for-byte reproducible.
    pub timing: bool,
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            phantoms: PhantomSetSpec::default(),
            strategies: vec![Strategy::AxialPlus, Strategy::Omni],
            views: vec![24],
            heads: vec![HeadKind::Mlp, HeadKind::Sage],
            topologies: vec![Topology::Complete],
            weightings: vec![Weighting::Inverse],
            sphere_seed: Some(0),
            anisotropic_z: None,
            slice_size: 32,
            encoder_dim: BuiltinEncoder::DEFAULT_DIM,
            encoder_seed: 0,
            hidden: None,
            train: TrainConfig::default(),
            folds: 5,
            fold_seed: 0,
            seed: 0,
            timing: false,
            jobs: 1,
        }
    }
}

/// One trained configuration, minus the fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub strategy: Strategy,
    pub views: usize,
    pub head: HeadKind,
    /// `None` for heads that ignore the graph.
    pub topology: Option<Topology>,
    pub weighting: Option<Weighting>,
}

impl RunKey {
    pub fn new(
        strategy: Strategy,
        views: usize,
        head: HeadKind,
        graph: Option<(Topology, Weighting)>,
    ) -> Self {
        Self {
            strategy,
            views,
            head,
            topology: graph.map(|g| g.0),
            weighting: graph.map(|g| g.1),
        }
    }

    fn csv_prefix(&self) -> String {
        let or_dash = |s: Option<String>| s.unwrap_or_else(|| "-".into());
        format!(
            "{},{},{},{},{}",
            self.strategy,
            self.views,
            self.head,
            or_dash(self.topology.map(|t| t.to_string())),
            or_dash(self.weighting.map(|w| w.to_string())),
        )
    }
}

pub const BENCH_KEYS: [&str; 22] = [
    "strategies",
    "views",
    "heads",
    "topologies",
    "weightings",
    "sphere_seed",
    "anisotropic_z",
    "slice_size",
    "encoder_dim",
    "encoder_seed",
    "hidden",
    "weight_decay",
    "batch_size",
    "epochs",
    "lr",
    "warmup_epochs",
    "plateau_factor",
    "patience",
    "folds",
    "fold_seed",
    "seed",
    "timing",
];

impl BenchConfig {
    /// Reads a benchmark config; unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut known: Vec<&str> = BENCH_KEYS.to_vec();
        known.extend(PhantomSetSpec::KEYS);
        known.push("jobs");
        kv.reject_unknown(&known)?;
        let d = Self::default();
        let t = TrainConfig::default();
        let sphere_seed = match kv.get("sphere_seed") {
            Some("none") => None,
            _ => kv.parsed("sphere_seed")?.or(d.sphere_seed),
        };
        let anisotropic_z = match kv.get("anisotropic_z") {
            Some("none") => None,
            _ => kv.parsed("anisotropic_z")?,
        };
        let hidden = match kv.get("hidden") {
            Some("auto") => None,
            _ => kv.parsed("hidden")?,
        };
        let seed = kv.parsed("seed")?.unwrap_or(d.seed);
        let cfg = Self {
            phantoms: PhantomSetSpec::from_key_values(kv)?,
            strategies: kv.list("strategies")?.unwrap_or(d.strategies),
            views: kv.list("views")?.unwrap_or(d.views),
            heads: kv.list("heads")?.unwrap_or(d.heads),
            topologies: kv.list("topologies")?.unwrap_or(d.topologies),
            weightings: kv.list("weightings")?.unwrap_or(d.weightings),
            sphere_seed,
            anisotropic_z,
            slice_size: kv.parsed("slice_size")?.unwrap_or(d.slice_size),
            encoder_dim: kv.parsed("encoder_dim")?.unwrap_or(d.encoder_dim),
            encoder_seed: kv.parsed("encoder_seed")?.unwrap_or(d.encoder_seed),
            hidden,
            train: TrainConfig {
                weight_decay: kv.parsed("weight_decay")?.unwrap_or(t.weight_decay),
                batch_size: kv.parsed("batch_size")?.unwrap_or(t.batch_size),
                epochs: kv.parsed("epochs")?.unwrap_or(t.epochs),
                peak_lr: kv.parsed("lr")?.unwrap_or(t.peak_lr),
                warmup_epochs: kv.parsed("warmup_epochs")?.unwrap_or(t.warmup_epochs),
                plateau_factor: kv.parsed("plateau_factor")?.unwrap_or(t.plateau_factor),
                patience: kv.parsed("patience")?.unwrap_or(t.patience),
                seed,
            },
            folds: kv.parsed("folds")?.unwrap_or(d.folds),
            fold_seed: kv.parsed("fold_seed")?.unwrap_or(d.fold_seed),
            seed,
            timing: kv.parsed("timing")?.unwrap_or(d.timing),
            jobs: kv.parsed("jobs")?.unwrap_or(d.jobs),
        };
        Ok(cfg)
    }

    /// Every configuration the benchmark will train, in output order.
    pub fn run_keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for &strategy in &self.strategies {
            for &views in &self.views {
                for &head in &self.heads {
                    match head {
                        HeadKind::Mlp => keys.push(RunKey::new(strategy, views, head, None)),
                        HeadKind::Sage => {
                            for &t in &self.topologies {
                                for &w in &self.weightings {
                                    keys.push(RunKey::new(strategy, views, head, Some((t, w))));
                                }
                            }
                        }
                    }
                }
            }
        }
        keys
    }

    /// Checks everything that can fail before any data is generated.
    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Error::config(format!("`{name}` must not be empty"));
        if self.strategies.is_empty() {
            return Err(empty("strategies"));
        }
        if self.views.is_empty() {
            return Err(empty("views"));
        }
        if self.heads.is_empty() {
            return Err(empty("heads"));
        }
        if self.heads.contains(&HeadKind::Sage)
            && (self.topologies.is_empty() || self.weightings.is_empty())
        {
            return Err(Error::config("graph heads need topologies and weightings"));
        }
        if self.strategies.contains(&Strategy::Omni) && self.sphere_seed.is_none() {
            return Err(Error::config("omni slicing requested without a sphere seed"));
        }
        if self.folds < 3 {
            return Err(Error::config("need at least 3 folds"));
        }
        if self.phantoms.n < 2 * self.folds {
            return Err(Error::config("too few phantoms for the number of folds"));
        }
        if self.slice_size == 0 || self.encoder_dim == 0 || self.jobs == 0 {
            return Err(Error::config("slice_size, encoder_dim and jobs must be positive"));
        }
        if let Some(z) = self.anisotropic_z {
            if !(z >= self.phantoms.spacing[2]) {
                return Err(Error::config("anisotropic_z must not be finer than the phantom z spacing"));
            }
        }
        self.train.validate()?;
        for key in self.run_keys() {
            key.strategy
                .check_views(key.views)
                .map_err(|e| Error::config(e.to_string()))?;
            let hidden = self.hidden_for(key.head, key.views);
            Head::zeros(key.head, self.encoder_dim, key.views, hidden)
                .map_err(|e| Error::config(e.to_string()))?;
        }
        Ok(())
    }

    fn hidden_for(&self, head: HeadKind, views: usize) -> usize {
        self.hidden.unwrap_or_else(|| {
            head.max_hidden(self.encoder_dim, views, crate::model::PARAM_BUDGET)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub key: RunKey,
    pub fold: usize,
    pub auroc: f64,
    pub mcc: f64,
    pub bal_acc: f64,
    pub f1: f64,
    pub train_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: RunKey,
    pub folds: usize,
    pub auroc: MeanSd,
    pub mcc: MeanSd,
    pub bal_acc: MeanSd,
    pub f1: MeanSd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResults {
    pub rows: Vec<ResultRow>,
}

impl BenchResults {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,views,head,topology,weighting,fold,auroc,mcc,bal_acc,f1,train_seconds\n",
        );
        for r in &self.rows {
            let secs = r
                .train_seconds
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{secs}",
                r.key.csv_prefix(),
                r.fold,
                r.auroc,
                r.mcc,
                r.bal_acc,
                r.f1
            );
        }
        out
    }

    /// Per-configuration mean and sd over folds, in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<RunKey, Vec<&ResultRow>> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry(r.key)
                .or_insert_with(|| {
                    order.push(r.key);
                    Vec::new()
                })
                .push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let rows = &groups[&key];
                let stat = |f: fn(&ResultRow) -> f64| {
                    MeanSd::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
                };
                SummaryRow {
                    key,
                    folds: rows.len(),
                    auroc: stat(|r| r.auroc),
                    mcc: stat(|r| r.mcc),
                    bal_acc: stat(|r| r.bal_acc),
                    f1: stat(|r| r.f1),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "strategy,views,head,topology,weighting,folds,auroc_mean,auroc_sd,mcc_mean,mcc_sd,bal_acc_mean,bal_acc_sd,f1_mean,f1_sd\n",
        );
        for s in self.summary() {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                s.key.csv_prefix(),
                s.folds,
                s.auroc.mean,
                s.auroc.sd,
                s.mcc.mean,
                s.mcc.sd,
                s.bal_acc.mean,
                s.bal_acc.sd,
                s.f1.mean,
                s.f1.sd
            );
        }
        out
    }

    pub fn mean_auroc(&self, key: &RunKey) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| &s.key == key)
            .map(|s| s.auroc.mean)
    }
}

/// Generates the phantom set, applying the anisotropy round trip if asked.
pub fn build_phantoms(cfg: &BenchConfig) -> Result<Vec<Phantom>> {
    let specs = cfg.phantoms.sample_specs();
    specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut p = generate_phantom(spec)
                .map_err(|e| e.context(format!("phantom {i}")))?;
            if let Some(z) = cfg.anisotropic_z {
                let iso = cfg.phantoms.spacing.iter().copied().fold(f64::INFINITY, f64::min);
                p.volume = p
                    .volume
                    .anisotropize(z)?
                    .resample_isotropic(iso, Interp::Linear)?;
                p.mask = p.mask.anisotropize(z)?.resample_isotropic(iso)?;
            }
            Ok(p)
        })
        .collect()
}

/// Sphere point set used for omni slicing with `views` views.
pub fn sphere_for(views: usize, seed: u64) -> Result<SpherePointSet> {
    optimize(
        views,
        &canonical_points(),
        OptimizeParams {
            seed,
            ..Default::default()
        },
    )
}

/// Slices and encodes every phantom for one (strategy, views) pair.
pub fn encode_set(
    cfg: &BenchConfig,
    phantoms: &[Phantom],
    strategy: Strategy,
    views: usize,
    points: Option<&SpherePointSet>,
) -> Result<Vec<FeatureMatrix>> {
    let encoder = BuiltinEncoder::new(cfg.encoder_dim, cfg.encoder_seed)?;
    let opts = SliceOptions {
        size_px: cfg.slice_size,
        ..Default::default()
    };
    phantoms
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let stack = slice_volume(&p.volume, &p.mask, strategy, views, points, &opts)
                .map_err(|e| e.context(format!("slicing phantom {i} ({strategy}, {views} views)")))?;
            encoder.encode(&stack)
        })
        .collect()
}

/// View graph for a graph head: the sphere mesh for omni stacks, a chain in
/// stack order otherwise.
pub fn graph_for(
    points: Option<&SpherePointSet>,
    views: usize,
    topology: Topology,
    weighting: Weighting,
) -> Result<ViewGraph> {
    match points {
        Some(p) => ViewGraph::spherical(p, topology, weighting),
        None => ViewGraph::chain(views, topology, weighting),
    }
}

fn run_folds(
    cfg: &BenchConfig,
    key: RunKey,
    data: &TrainSet,
    folds: &super::folds::FoldSplit,
) -> Result<Vec<ResultRow>> {
    let hidden = cfg.hidden_for(key.head, key.views);
    (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let roles = folds.run(fold);
            let run_seed = cfg.seed.wrapping_add(fold as u64);
            let head = Head::init(key.head, cfg.encoder_dim, key.views, hidden, run_seed)?;
            let tcfg = TrainConfig {
                seed: run_seed,
                ..cfg.train.clone()
            };
            let start = Instant::now();
            let trained = train(head, data, &roles.train, &roles.val, &tcfg)?;
            let seconds = start.elapsed().as_secs_f64();
            let logits = data.logits(&trained.head, &roles.test);
            let labels: Vec<u8> = roles.test.iter().map(|&i| data.labels[i]).collect();
            let c = Confusion::from_predictions(&predictions_from_logits(&logits), &labels)?;
            Ok(ResultRow {
                key,
                fold,
                auroc: auroc(&logits, &labels)?,
                mcc: c.mcc(),
                bal_acc: c.balanced_accuracy(),
                f1: c.f1(),
                train_seconds: cfg.timing.then_some(seconds),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| {
            e.context(format!(
                "run {} {} views {}",
                key.strategy, key.views, key.head
            ))
        })
}

/// Runs the full benchmark described by `cfg`.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResults> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &BenchConfig) -> Result<BenchResults> {
    let phantoms = build_phantoms(cfg)?;
    let labels: Vec<u8> = phantoms.iter().map(|p| p.label).collect();
    let folds = make_folds(&labels, cfg.folds, cfg.fold_seed)?;
    let keys = cfg.run_keys();

    let mut rows = Vec::new();
    for &strategy in &cfg.strategies {
        for &views in &cfg.views {
            let points = match strategy {
                Strategy::Omni => Some(sphere_for(views, cfg.sphere_seed.unwrap_or_default())?),
                _ => None,
            };
            info!("slicing {} phantoms: {strategy}, {views} views", phantoms.len());
            let features = encode_set(cfg, &phantoms, strategy, views, points.as_ref())?;
            for key in keys
                .iter()
                .filter(|k| k.strategy == strategy && k.views == views)
            {
                let inputs = match (key.topology, key.weighting) {
                    (Some(t), Some(w)) => {
                        let graph = graph_for(points.as_ref(), views, t, w)?;
                        features
                            .iter()
                            .map(|f| aggregate_neighbors(f, &graph))
                            .collect::<Result<Vec<_>>>()?
                    }
                    _ => features.iter().map(concatenate).collect(),
                };
                let data = TrainSet::new(inputs, labels.clone())?;
                info!("training {}", key.csv_prefix());
                rows.extend(run_folds(cfg, *key, &data, &folds)?);
            }
        }
    }
    Ok(BenchResults { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_product_of_keys() {
        let cfg = BenchConfig {
            strategies: vec![Strategy::AxialPlus, Strategy::Omni],
            views: vec![8, 24],
            heads: vec![HeadKind::Mlp, HeadKind::Sage],
            ..Default::default()
        };
        assert_eq!(cfg.run_keys().len(), 8);
        let more = BenchConfig {
            weightings: Weighting::ALL.to_vec(),
            ..cfg
        };
        // MLP rows ignore the graph settings.
        assert_eq!(more.run_keys().len(), 2 * 2 * (1 + 4));
    }

    #[test]
    fn omni_without_sphere_seed_is_config_error() {
        let cfg = BenchConfig {
            sphere_seed: None,
            ..Default::default()
        };
        let err = run_benchmark(&cfg).unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Config);
    }

    #[test]
    fn impossible_view_count_is_config_error() {
        let cfg = BenchConfig {
            strategies: vec![Strategy::TwoFiveD],
            views: vec![24],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn key_values_round_trip() {
        let kv = KeyValues::parse(
            "strategies = omni\nviews = 8\nheads = sage\nweightings = uniform, inverse\nn = 40\nlr = 0.01\nsphere_seed = 3\n",
        )
        .unwrap();
        let cfg = BenchConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.strategies, vec![Strategy::Omni]);
        assert_eq!(cfg.weightings, vec![Weighting::Uniform, Weighting::Inverse]);
        assert_eq!(cfg.phantoms.n, 40);
        assert_eq!(cfg.train.peak_lr, 0.01);
        assert_eq!(cfg.sphere_seed, Some(3));
        let bad = KeyValues::parse("strategy = omni\n").unwrap();
        assert!(BenchConfig::from_key_values(&bad).is_err());
    }

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sd, 1.0);
    }
}
