//! Command-line front end. Commands compose through files:
//! sphere points -> slice stack -> features -> graph -> trained head.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::encoder::{encode_builtin, load_external, BuiltinEncoder};
use crate::error::{Error, ErrorClass, Result};
use crate::eval::bench::{run_benchmark, BenchConfig, BENCH_KEYS};
use crate::eval::metrics::{auroc, predictions_from_logits, Confusion};
use crate::eval::make_folds;
use crate::eval::phantom::{generate_phantom, PhantomSetSpec};
use crate::graph::{export_obj, Topology, ViewGraph, Weighting};
use crate::model::{train, Head, HeadKind, TrainConfig, TrainSet, PARAM_BUDGET};
use crate::nrrd;
use crate::slicer::{slice_volume, SliceOptions, SliceStack, Strategy};
use crate::sphere::{canonical_points, optimize, OptimizeParams, SpherePointSet};

#[derive(Debug, Parser)]
#[command(name = "tomoview", version, about = "Omnidirectional slicing and view-graph classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncodeMode {
    Builtin,
    External,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize N sphere viewpoints (3 canonical ones pinned); writes points.txt and mesh.obj.
    Sphere {
        n: usize,
        seed: u64,
        out: PathBuf,
    },
    /// Cut a slice stack out of a volume/mask NRRD pair.
    Slice {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        views: usize,
        /// Sphere point file; required for omni.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a slice stack into an FVEC feature file.
    Encode {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, value_enum, default_value_t = EncodeMode::Builtin)]
        mode: EncodeMode,
        #[arg(long, default_value_t = BuiltinEncoder::DEFAULT_DIM)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Precomputed features to validate against the stack (external mode).
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the view graph over a point file; writes adjacency.csv, hops.csv and mesh.obj.
    Graph {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value = "complete")]
        topology: Topology,
        #[arg(long, default_value = "inverse")]
        weighting: Weighting,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate phantoms from a key = value spec file.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one head on one cross-validation run.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained head on the test fold of its run.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the synthetic benchmark.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Keys accepted by `train` / `eval` config files, with defaults.
pub const RUN_KEYS: [(&str, &str); 17] = [
    ("dataset", "(required) CSV with columns features,label; paths relative to the CSV"),
    ("head", "sage"),
    ("points", "none; sphere point file giving the omni view graph (chain graph otherwise)"),
    ("topology", "complete"),
    ("weighting", "inverse"),
    ("hidden", "auto (largest width within 100000 parameters)"),
    ("weight_decay", "0.001"),
    ("batch_size", "16"),
    ("epochs", "300"),
    ("lr", "0.001 (peak, after linear warm-up)"),
    ("warmup_epochs", "100"),
    ("plateau_factor", "0.95"),
    ("patience", "5"),
    ("folds", "5"),
    ("fold_seed", "0"),
    ("fold", "0 (run index: test fold, validation fold = fold + 1)"),
    ("seed", "0"),
];

fn keys_help() -> String {
    let mut s = String::from("Config keys for `train` and `eval` (key = value, # comments):\n");
    for (k, d) in RUN_KEYS {
        s.push_str(&format!("  {k:<15} {d}\n"));
    }
    s.push_str("\nConfig keys for `bench` (defaults in parentheses):\n");
    let b = BenchConfig::default();
    let t = &b.train;
    let p = &b.phantoms;
    let defaults: Vec<(&str, String)> = vec![
        ("strategies", "axial_plus, omni".into()),
        ("views", "24".into()),
        ("heads", "mlp, sage".into()),
        ("topologies", "complete".into()),
        ("weightings", "inverse".into()),
        ("sphere_seed", "0; `none` disables omni".into()),
        ("anisotropic_z", "none".into()),
        ("slice_size", b.slice_size.to_string()),
        ("encoder_dim", b.encoder_dim.to_string()),
        ("encoder_seed", b.encoder_seed.to_string()),
        ("hidden", "auto".into()),
        ("weight_decay", t.weight_decay.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("epochs", t.epochs.to_string()),
        ("lr", t.peak_lr.to_string()),
        ("warmup_epochs", t.warmup_epochs.to_string()),
        ("plateau_factor", t.plateau_factor.to_string()),
        ("patience", t.patience.to_string()),
        ("folds", b.folds.to_string()),
        ("fold_seed", b.fold_seed.to_string()),
        ("seed", b.seed.to_string()),
        ("timing", b.timing.to_string()),
        ("jobs", b.jobs.to_string()),
        ("n", p.n.to_string()),
        ("dims", format!("{}, {}, {}", p.dims[0], p.dims[1], p.dims[2])),
        ("spacing", format!("{}, {}, {}", p.spacing[0], p.spacing[1], p.spacing[2])),
        ("major_axis", format!("{}, {}", p.major_axis.0, p.major_axis.1)),
        ("minor_axis", format!("{}, {}", p.minor_axis.0, p.minor_axis.1)),
        ("tilt_deg", format!("{}, {}", p.tilt_deg.0, p.tilt_deg.1)),
        ("jitter", p.jitter.to_string()),
        ("contrast", format!("{}, {}", p.contrast.0, p.contrast.1)),
        ("wavelength", format!("{}, {}", p.wavelength.0, p.wavelength.1)),
        ("amplitude", p.amplitude.to_string()),
        ("noise_sigma", p.noise_sigma.to_string()),
        ("phantom_seed", p.seed.to_string()),
    ];
    debug_assert_eq!(defaults.len(), BENCH_KEYS.len() + 1 + PhantomSetSpec::KEYS.len());
    for (k, d) in defaults {
        s.push_str(&format!("  {k:<15} {d}\n"));
    }
    s.push_str("\nThe phantom keys (n .. phantom_seed) are also the `synth` spec format.\n");
    s.push_str("Exit codes: 2 configuration, 3 I/O or file format, 4 numeric.\n");
    s
}

/// Parses `args` (including the program name).
pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = Cli::command()
        .after_long_help(keys_help())
        .try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::Numeric => 4,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sphere { n, seed, out } => cmd_sphere(n, seed, &out),
        Command::Slice {
            volume,
            mask,
            strategy,
            views,
            points,
            size,
            out,
        } => cmd_slice(&volume, &mask, strategy, views, points.as_deref(), size, &out),
        Command::Encode {
            stack,
            mode,
            dim,
            seed,
            external,
            out,
        } => cmd_encode(&stack, mode, dim, seed, external.as_deref(), &out),
        Command::Graph {
            points,
            topology,
            weighting,
            out,
        } => cmd_graph(&points, topology, weighting, &out),
        Command::Synth { spec, n, out } => cmd_synth(spec.as_deref(), n, &out),
        Command::Train { config, out } => cmd_train(&config, &out),
        Command::Eval { config, model, out } => cmd_eval(&config, &model, &out),
        Command::Bench { config, out, jobs } => cmd_bench(&config, &out, jobs),
    }
}

pub fn cmd_sphere(n: usize, seed: u64, out: &Path) -> Result<()> {
    let points = optimize(
        n,
        &canonical_points(),
        OptimizeParams {
            seed,
            ..Default::default()
        },
    )?;
    create_dir(out)?;
    points.write(&out.join("points.txt"))?;
    let mesh = crate::graph::delaunay_sphere(&points)?;
    write(&out.join("mesh.obj"), export_obj(&points, &mesh))
}

pub fn cmd_slice(
    volume: &Path,
    mask: &Path,
    strategy: Strategy,
    views: usize,
    points: Option<&Path>,
    size: usize,
    out: &Path,
) -> Result<()> {
    let vol = nrrd::read_volume(volume)?;
    let m = nrrd::read_mask(mask)?;
    let pts = points.map(SpherePointSet::read).transpose()?;
    let opts = SliceOptions {
        size_px: size,
        ..Default::default()
    };
    let stack = slice_volume(&vol, &m, strategy, views, pts.as_ref(), &opts)?;
    stack.write_dir(out)
}

pub fn cmd_encode(
    stack_dir: &Path,
    mode: EncodeMode,
    dim: usize,
    seed: u64,
    external: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let stack = SliceStack::read_dir(stack_dir)?;
    let features = match mode {
        EncodeMode::Builtin => encode_builtin(&stack, dim, seed)?,
        EncodeMode::External => {
            let path = external
                .ok_or_else(|| Error::config("external mode needs --external <file.fvec>"))?;
            let mut f = load_external(path, stack.len())?;
            let expected = stack.manifest_hash();
            match &f.manifest_hash {
                Some(h) if *h != expected => {
                    return Err(Error::malformed(
                        "FVEC header",
                        format!("manifest hash {h} does not match stack {expected}"),
                    ))
                }
                _ => f.manifest_hash = Some(expected),
            }
            f
        }
    };
    features.write(out)
}

pub fn cmd_graph(points: &Path, topology: Topology, weighting: Weighting, out: &Path) -> Result<()> {
    let pts = SpherePointSet::read(points)?;
    let graph = ViewGraph::spherical(&pts, topology, weighting)?;
    create_dir(out)?;
    write(&out.join("adjacency.csv"), graph.adjacency_csv())?;
    write(&out.join("hops.csv"), graph.hops_csv())?;
    write(&out.join("mesh.obj"), export_obj(&pts, &graph.mesh))
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRecord {
    id: usize,
    volume: String,
    mask: String,
    label: u8,
}

pub fn cmd_synth(spec: Option<&Path>, n: Option<usize>, out: &Path) -> Result<()> {
    let mut kv = match spec {
        Some(p) => KeyValues::parse(&read_text(p)?)?,
        None => KeyValues::default(),
    };
    kv.reject_unknown(&PhantomSetSpec::KEYS)?;
    if let Some(n) = n {
        kv.set("n", n.to_string());
    }
    let set = PhantomSetSpec::from_key_values(&kv)?;
    create_dir(out)?;
    write(&out.join("spec.txt"), kv.to_text())?;
    let labels_path = out.join("labels.csv");
    let mut labels = csv::Writer::from_path(&labels_path)
        .map_err(|e| Error::io(&labels_path, std::io::Error::other(e)))?;
    for (i, s) in set.sample_specs().iter().enumerate() {
        let p = generate_phantom(s).map_err(|e| e.context(format!("phantom {i}")))?;
        let volume = format!("phantom_{i:03}_volume.nrrd");
        let mask = format!("phantom_{i:03}_mask.nrrd");
        nrrd::write_volume(&out.join(&volume), &p.volume)?;
        nrrd::write_mask(&out.join(&mask), &p.mask)?;
        labels
            .serialize(LabelRecord {
                id: i,
                volume,
                mask,
                label: p.label,
            })
            .map_err(|e| Error::io(&labels_path, std::io::Error::other(e)))?;
    }
    labels.flush().map_err(|e| Error::io(&labels_path, e))
}

/// Parsed `train` / `eval` configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub head: HeadKind,
    pub points: Option<PathBuf>,
    pub topology: Topology,
    pub weighting: Weighting,
    pub hidden: Option<usize>,
    pub train: TrainConfig,
    pub folds: usize,
    pub fold_seed: u64,
    pub fold: usize,
    /// Original text, echoed into outputs.
    pub text: String,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let known: Vec<&str> = RUN_KEYS.iter().map(|(k, _)| *k).collect();
        kv.reject_unknown(&known)?;
        let t = TrainConfig::default();
        let seed = kv.parsed("seed")?.unwrap_or(0);
        let rel = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let dataset = kv
            .get("dataset")
            .map(rel)
            .ok_or_else(|| Error::config("missing required key `dataset`"))?;
        let cfg = Self {
            dataset,
            head: kv.parsed("head")?.unwrap_or(HeadKind::Sage),
            points: kv.get("points").filter(|p| *p != "none").map(rel),
            topology: kv.parsed("topology")?.unwrap_or(Topology::Complete),
            weighting: kv.parsed("weighting")?.unwrap_or(Weighting::Inverse),
            hidden: match kv.get("hidden") {
                None | Some("auto") => None,
                Some(_) => kv.parsed("hidden")?,
            },
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
            folds: kv.parsed("folds")?.unwrap_or(5),
            fold_seed: kv.parsed("fold_seed")?.unwrap_or(0),
            fold: kv.parsed("fold")?.unwrap_or(0),
            text: text.to_string(),
        };
        cfg.train.validate()?;
        if cfg.fold >= cfg.folds {
            return Err(Error::config("`fold` must be smaller than `folds`"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&read_text(path)?, base)
    }
}

#[derive(Debug, Deserialize)]
struct DatasetRecord {
    features: String,
    label: u8,
}

/// Loaded data set: prepared inputs plus the shape needed to build heads.
struct Dataset {
    set: TrainSet,
    dim: usize,
    n_slices: usize,
}

fn load_dataset(cfg: &RunConfig, head: HeadKind) -> Result<Dataset> {
    let io = |e: csv::Error| Error::io(&cfg.dataset, std::io::Error::other(e));
    let mut reader = csv::Reader::from_path(&cfg.dataset).map_err(io)?;
    let base = cfg.dataset.parent().unwrap_or(Path::new("."));
    let records: Vec<DatasetRecord> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(io)?;
    if records.is_empty() {
        return Err(Error::config("data set is empty"));
    }
    let features = records
        .iter()
        .map(|r| {
            let bytes = fs::read(base.join(&r.features)).map_err(|e| Error::io(base.join(&r.features), e))?;
            crate::encoder::FeatureMatrix::from_fvec(&bytes, None)
                .map_err(|e| e.context(r.features.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (n_slices, dim) = (features[0].rows(), features[0].dim());
    if let Some(bad) = features.iter().position(|f| f.rows() != n_slices || f.dim() != dim) {
        return Err(Error::RowCount {
            expected: n_slices,
            found: features[bad].rows(),
        }
        .context(records[bad].features.clone()));
    }
    let graph = match head {
        HeadKind::Sage => Some(match &cfg.points {
            Some(p) => ViewGraph::spherical(&SpherePointSet::read(p)?, cfg.topology, cfg.weighting)?,
            None => ViewGraph::chain(n_slices, cfg.topology, cfg.weighting)?,
        }),
        HeadKind::Mlp => None,
    };
    let probe = Head::zeros(head, dim, n_slices, 1)?;
    let inputs = features
        .iter()
        .map(|f| probe.prepare(f, graph.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let labels = records.iter().map(|r| r.label).collect();
    Ok(Dataset {
        set: TrainSet::new(inputs, labels)?,
        dim,
        n_slices,
    })
}

pub fn cmd_train(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let data = load_dataset(&cfg, cfg.head)?;
    let folds = make_folds(&data.set.labels, cfg.folds, cfg.fold_seed)?;
    let roles = folds.run(cfg.fold);
    let hidden = cfg
        .hidden
        .unwrap_or_else(|| cfg.head.max_hidden(data.dim, data.n_slices, PARAM_BUDGET));
    let head = Head::init(cfg.head, data.dim, data.n_slices, hidden, cfg.train.seed)?;
    let trained = train(head, &data.set, &roles.train, &roles.val, &cfg.train)?;
    create_dir(out)?;
    write(&out.join("config.txt"), &cfg.text)?;
    write(&out.join("head.bin"), trained.head.to_bytes())?;
    write(&out.join("trace.csv"), trained.trace_csv())
}

pub fn cmd_eval(config: &Path, model: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let bytes = fs::read(model).map_err(|e| Error::io(model, e))?;
    let head = Head::from_bytes(&bytes)?;
    let data = load_dataset(&cfg, head.kind)?;
    if data.dim != head.dim || data.n_slices != head.n_slices {
        return Err(Error::config(format!(
            "model expects {} x {} features, data set has {} x {}",
            head.n_slices, head.dim, data.n_slices, data.dim
        )));
    }
    let folds = make_folds(&data.set.labels, cfg.folds, cfg.fold_seed)?;
    let test = folds.run(cfg.fold).test;
    let logits = data.set.logits(&head, &test);
    let labels: Vec<u8> = test.iter().map(|&i| data.set.labels[i]).collect();
    let c = Confusion::from_predictions(&predictions_from_logits(&logits), &labels)?;
    let text = format!(
        "fold,auroc,mcc,bal_acc,f1\n{},{:.6},{:.6},{:.6},{:.6}\n",
        cfg.fold,
        auroc(&logits, &labels)?,
        c.mcc(),
        c.balanced_accuracy(),
        c.f1()
    );
    create_dir(out)?;
    write(&out.join("config.txt"), &cfg.text)?;
    write(&out.join("metrics.csv"), text)
}

pub fn cmd_bench(config: &Path, out: &Path, jobs: Option<usize>) -> Result<()> {
    let text = read_text(config)?;
    let mut kv = KeyValues::parse(&text)?;
    if let Some(j) = jobs {
        kv.set("jobs", j.to_string());
    }
    let cfg = BenchConfig::from_key_values(&kv)?;
    let results = run_benchmark(&cfg)?;
    create_dir(out)?;
    write(&out.join("config.txt"), &text)?;
    write(&out.join("results.csv"), results.to_csv())?;
    write(&out.join("summary.csv"), results.summary_csv())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            // Display already folds in wrapped causes.
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
