//! Commands behind the `cdrm` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binref::{input_probe_grid, memory_report, oracle_agreement, BinGrid};
use crate::data::{gen_room, gen_toy, Dims, RoomLayout, ToyConfig, Transition, TransitionDataset};
use crate::error::{CdrmError, Result};
use crate::inference::{infer, InferenceConfig};
use crate::io::{load_model, save_model, Provenance};
use crate::kde::{BandwidthRule, KdeStats};
use crate::metrics::{evaluate_room, CdrmScorer, OracleScorer, ProbeScorer, RoomEvaluation};
use crate::model::CdrmModel;
use crate::nnet::MlpNetwork;
use crate::train::{init_model, train, TrainConfig};

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 128, 64];

/// Everything a run can be configured with from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub inference: InferenceConfig,
    pub bandwidth: BandwidthRule,
    pub data: Option<PathBuf>,
    pub layout: RoomLayout,
    pub eval_resolution: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            inference: InferenceConfig::default(),
            bandwidth: BandwidthRule::Median,
            data: None,
            layout: RoomLayout::default(),
            eval_resolution: 40,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CdrmError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CdrmError::InvalidConfig(format!("{}: {e}", path.display())))
    }

    fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.inference.validate()?;
        self.layout.validate()?;
        if self.hidden.contains(&0) {
            return Err(CdrmError::InvalidConfig("hidden layer widths must be positive".into()));
        }
        if self.eval_resolution == 0 {
            return Err(CdrmError::InvalidConfig("eval_resolution must be positive".into()));
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(CdrmError::InvalidConfig("fixed bandwidth must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cdrm", version, about = "Train and query compressed data representation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Train a model on a dataset
    Train(TrainArgs),
    /// Query a trained model
    Infer(InferArgs),
    /// Room-grid AU/EU classification metrics
    Eval(EvalArgs),
    /// Compare CDRM valid-set emptiness with a bin grid
    Oracle(OracleArgs),
    /// Time grid lookup against CDRM inference
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// 1-D sine dataset with a gap around zero
    Toy(ToyArgs),
    /// Random walk through the room layout
    Room(RoomArgs),
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_per_region: usize,
    #[arg(long, default_value_t = 0.3)]
    pub sigma_eta: f64,
    #[arg(long)]
    pub multimodal: bool,
}

#[derive(Debug, Args)]
pub struct RoomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON room layout; the default layout when omitted
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV; falls back to `data` in the config
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV [default: <out>.loss.csv]
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated hidden widths
    #[arg(long)]
    pub hidden: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated state followed by action
    #[arg(long, allow_hyphen_values = true)]
    pub query: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "oracle_stub")]
    pub model: Option<PathBuf>,
    /// Score probes with the ground-truth regions instead of a model
    #[arg(long)]
    pub oracle_stub: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Metrics CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Per-probe CSV [default: <out>.probes.csv]
    #[arg(long)]
    pub probes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Probes per input axis
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-probe JSON report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "1,8,32,128,512")]
    pub bins: String,
    #[arg(long, default_value = "5,10,25,50")]
    pub steps: String,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Langevin samples per CDRM query
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
    /// Queries per timed repetition
    #[arg(long, default_value_t = 64)]
    pub queries: usize,
    #[arg(long, default_value_t = 1)]
    pub d_s: usize,
    #[arg(long, default_value_t = 1)]
    pub d_a: usize,
    #[arg(long, default_value = "64,128,64")]
    pub hidden: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit status for an error: 2 for bad arguments or configuration, 1 otherwise.
pub fn exit_code(err: &CdrmError) -> i32 {
    match err {
        CdrmError::InvalidInput(_)
        | CdrmError::DimensionMismatch { .. }
        | CdrmError::InvalidConfig(_) => 2,
        _ => 1,
    }
}

/// Caps the global rayon pool at `CDRM_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CDRM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CdrmError::InvalidConfig(format!("CDRM_THREADS={raw:?} is not a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen { kind } => cmd_gen(kind),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CdrmError::InvalidInput(format!("{t:?} is not a finite number")))
        })
        .collect()
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CdrmError::InvalidInput(format!("{what}: {t:?} is not a non-negative integer")))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CdrmError::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn cmd_gen(kind: GenKind) -> Result<()> {
    let (out, dataset, sidecar) = match kind {
        GenKind::Toy(a) => {
            let cfg = ToyConfig {
                n_per_region: a.n_per_region,
                sigma_eta: a.sigma_eta,
                multimodal: a.multimodal,
                seed: a.seed,
            };
            let ds = gen_toy(&cfg)?;
            let meta = serde_json::json!({ "generator": "toy", "config": cfg, "seed": a.seed });
            (a.out, ds, meta)
        }
        GenKind::Room(a) => {
            let layout = match &a.layout {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CdrmError::io(p, e))?;
                    serde_json::from_str(&text)
                        .map_err(|e| CdrmError::InvalidConfig(format!("{}: {e}", p.display())))?
                }
                None => RoomLayout::default(),
            };
            let ds = gen_room(a.steps, &layout, a.seed)?;
            let meta = serde_json::json!({
                "generator": "room",
                "layout": layout,
                "steps": a.steps,
                "seed": a.seed,
            });
            (a.out, ds, meta)
        }
    };
    let sidecar_file = sidecar_path(&out);
    if sidecar_file == out {
        return Err(CdrmError::InvalidInput("dataset path must not end in .json".into()));
    }
    dataset.save_csv(&out)?;
    write_file(&sidecar_file, &(serde_json::to_string_pretty(&sidecar)? + "\n"))
}

fn train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(h) = &a.hidden {
        cfg.hidden = parse_list(h, "--hidden")?;
    }
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains a model per `cfg` and attaches its KDE statistics.
pub fn fit_model(dataset: &TransitionDataset, cfg: &RunConfig) -> Result<(CdrmModel, Vec<f64>)> {
    let mut model = init_model(dataset, &cfg.hidden, cfg.seed)?;
    let report = train(&mut model, dataset, &cfg.train)?;
    model.set_kde(KdeStats::fit(&dataset.inputs(), cfg.bandwidth, cfg.seed)?)?;
    Ok((model, report.losses))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| CdrmError::InvalidConfig("no dataset: pass --data or set `data`".into()))?;
    let dataset = TransitionDataset::load_csv(&data)?;
    let (model, losses) = fit_model(&dataset, &cfg)?;

    let mut hashed = cfg.clone();
    hashed.data = None;
    let provenance = Provenance::new(&serde_json::to_string(&hashed)?, cfg.seed, cfg.train.epochs);
    save_model(&a.out, &model, provenance)?;

    let mut trace = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(trace, "{i},{l}");
    }
    let trace_path = a.trace.unwrap_or_else(|| with_suffix(&a.out, ".loss.csv"));
    write_file(&trace_path, &trace)
}

#[derive(Debug, Serialize)]
struct InferOutput {
    prediction: Option<Vec<f64>>,
    eu: f64,
    au: Option<f64>,
    valid_count: usize,
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.validate()?;
    let query = parse_vector(&a.query)?;
    let (model, _) = load_model(&a.model)?;
    let r = infer(&model, &query, &cfg.inference, a.seed)?;
    let out = InferOutput {
        prediction: r.prediction,
        eu: r.eu,
        au: r.au,
        valid_count: r.valid_count,
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

pub fn metrics_csv(eval: &RoomEvaluation) -> String {
    let m = &eval.metrics;
    format!(
        "method,au_auroc,au_auprc,eu_auroc,eu_auprc\nCDRM,{},{},{},{}\n",
        m.au_auroc, m.au_auprc, m.eu_auroc, m.eu_auprc
    )
}

pub fn probes_csv(eval: &RoomEvaluation) -> String {
    let mut s = String::from("x,y,label,au,eu,valid_count\n");
    for p in &eval.probes {
        let au = p.scores.au.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{au},{},{}",
            p.x,
            p.y,
            p.label.as_str(),
            p.scores.eu,
            p.scores.valid_count
        );
    }
    s
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(r) = a.resolution {
        cfg.eval_resolution = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let model;
    let scorer: Box<dyn ProbeScorer + '_> = if a.oracle_stub {
        Box::new(OracleScorer { layout: cfg.layout })
    } else {
        let path = a.model.as_ref().expect("clap enforces --model");
        model = load_model(path)?.0;
        Box::new(CdrmScorer {
            model: &model,
            config: cfg.inference,
        })
    };
    let eval = evaluate_room(scorer.as_ref(), &cfg.layout, cfg.eval_resolution, cfg.seed)?;
    write_file(&a.out, &metrics_csv(&eval))?;
    let probe_path = a.probes.unwrap_or_else(|| with_suffix(&a.out, ".probes.csv"));
    write_file(&probe_path, &probes_csv(&eval))?;
    println!("{}", serde_json::to_string(&eval.metrics)?);
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.validate()?;
    let (model, _) = load_model(&a.model)?;
    let dataset = TransitionDataset::load_csv(&a.data)?;
    if dataset.dims() != model.dims() {
        return Err(CdrmError::InvalidInput("dataset and model dims differ".into()));
    }
    let grid = BinGrid::build(&dataset, a.bins, dataset.bounds())?;
    let probes = input_probe_grid(&dataset, a.points)?;
    let report = oracle_agreement(&model, &grid, &probes, &cfg.inference, a.seed)?;
    if let Some(out) = &a.out {
        write_file(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    println!(
        "{}",
        serde_json::json!({
            "probes": report.probes.len(),
            "agreed": report.agreed,
            "fraction": report.fraction,
        })
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub b: usize,
    pub d_s: usize,
    pub d_a: usize,
    pub l: usize,
    pub w: usize,
    pub cdrm_ns: u64,
    pub bin_ns: u64,
    pub joint_cells: u64,
    pub concat_index_cells: u64,
}

const BIN_QUERIES_PER_REP: usize = 20_000;

pub const BENCH_HEADER: &str = "b,d_s,d_a,L,W,cdrm_ns,bin_ns,joint_cells,concat_index_cells";

/// Smooth synthetic transitions `s' = s + 0.1 * mean(a)` over the unit box.
fn bench_dataset(d_s: usize, d_a: usize, n: usize, seed: u64) -> Result<TransitionDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..d_s).map(|_| rng.random_range(0.0..1.0)).collect();
            let a: Vec<f64> = (0..d_a).map(|_| rng.random_range(0.0..1.0)).collect();
            let push = if d_a == 0 { 0.0 } else { 0.1 * a.iter().sum::<f64>() / d_a as f64 };
            let next = s.iter().map(|v| v + push).collect();
            Transition::new(s, a, next)
        })
        .collect();
    TransitionDataset::new(Dims::new(d_s, d_a, d_s), tuples)
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Median over `reps` of the mean wall time per query, in nanoseconds. Each
/// rep cycles through `queries` `passes` times.
fn time_per_query(
    reps: usize,
    passes: usize,
    queries: &[Vec<f64>],
    mut f: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<u64> {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        for _ in 0..passes {
            for (i, q) in queries.iter().enumerate() {
                f(i, q)?;
            }
        }
        samples.push((t.elapsed().as_nanos() / (passes * queries.len()) as u128) as u64);
    }
    Ok(median(samples))
}

pub fn run_bench(a: &BenchArgs) -> Result<Vec<BenchRow>> {
    let bins = parse_list(&a.bins, "--bins")?;
    let steps = parse_list(&a.steps, "--steps")?;
    let hidden = parse_list(&a.hidden, "--hidden")?;
    if a.reps == 0 || a.queries == 0 || a.d_s == 0 || bins.contains(&0) || steps.contains(&0) {
        return Err(CdrmError::InvalidConfig(
            "reps, queries, d_s, bins and steps must be positive".into(),
        ));
    }
    let dataset = bench_dataset(a.d_s, a.d_a, 2000, a.seed)?;
    let dims = dataset.dims();

    let mut layer_dims = vec![dims.joint()];
    layer_dims.extend(&hidden);
    layer_dims.push(1);
    let net = MlpNetwork::xavier(&layer_dims, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let w = net.param_count();
    let mut model = CdrmModel::new(net, dims, dataset.bounds().to_vec())?;
    model.set_kde(KdeStats::fit(&dataset.inputs(), BandwidthRule::Median, a.seed)?)?;

    // queries sit at observed inputs, so every lookup finds occupied cells
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0xBE9C);
    let queries: Vec<Vec<f64>> = (0..a.queries)
        .map(|_| dataset.tuples()[rng.random_range(0..dataset.len())].input())
        .collect();

    let mut cdrm_ns = Vec::with_capacity(steps.len());
    for &l in &steps {
        let cfg = InferenceConfig {
            n_samples: a.samples,
            steps: l,
            ..InferenceConfig::default()
        };
        // a handful of queries keep the CDRM side affordable
        let subset = &queries[..queries.len().min(4)];
        cdrm_ns.push(time_per_query(a.reps, 1, subset, |i, q| {
            infer(&model, q, &cfg, i as u64).map(|_| ())
        })?);
    }

    // grid lookups take nanoseconds, so repeat them until a rep is long
    // enough to time
    let passes = BIN_QUERIES_PER_REP.div_ceil(queries.len());
    let mut rows = Vec::new();
    for &b in &bins {
        let grid = BinGrid::build(&dataset, b, dataset.bounds())?;
        let bin_ns = time_per_query(a.reps, passes, &queries, |_, q| grid.bin_infer(q).map(|_| ()))?;
        let mem = memory_report(dims, b as u64);
        for (&l, &c) in steps.iter().zip(&cdrm_ns) {
            rows.push(BenchRow {
                b,
                d_s: dims.d_s,
                d_a: dims.d_a,
                l,
                w,
                cdrm_ns: c,
                bin_ns,
                joint_cells: mem.joint_cells,
                concat_index_cells: mem.concat_index_cells,
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.b, r.d_s, r.d_a, r.l, r.w, r.cdrm_ns, r.bin_ns, r.joint_cells, r.concat_index_cells
        );
    }
    s
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let rows = run_bench(&a)?;
    write_file(&a.out, &bench_csv(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_parse_or_fail_cleanly() {
        assert_eq!(parse_vector("0.5, -1e-3").unwrap(), vec![0.5, -0.001]);
        assert_eq!(parse_vector("").unwrap(), Vec::<f64>::new());
        for bad in ["a", "1,,2", "nan", "1;2"] {
            let e = parse_vector(bad).unwrap_err();
            assert_eq!(exit_code(&e), 2, "{bad}");
        }
    }

    #[test]
    fn run_config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "inference": {"alpha": 0.7}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.inference.alpha, 0.7);
        assert_eq!(cfg.inference.steps, 50);
        std::fs::write(&p, r#"{"sead": 3}"#).unwrap();
        assert_eq!(exit_code(&RunConfig::load(&p).unwrap_err()), 2);
        std::fs::write(&p, r#"{"inference": {"alpha": 1.5}}"#).unwrap();
        assert!(RunConfig::load(&p).unwrap().validate().is_err());
    }

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.hidden, vec![64, 128, 64]);
        assert_eq!(c.train.epochs, 100);
        assert_eq!(c.train.negative_batch, 32);
        assert_eq!(c.train.langevin.steps, 10);
        assert_eq!(c.eval_resolution, 40);
        c.validate().unwrap();
    }

    #[test]
    fn bench_emits_one_row_per_combination() {
        let dir = tempfile::tempdir().unwrap();
        let args = BenchArgs {
            bins: "1,4".into(),
            steps: "1,2,3".into(),
            reps: 1,
            samples: 4,
            queries: 3,
            d_s: 1,
            d_a: 1,
            hidden: "3".into(),
            seed: 0,
            out: dir.path().join("b.csv"),
        };
        let rows = run_bench(&args).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].joint_cells, 1);
        assert_eq!(rows[3].concat_index_cells, 64);
        let csv = bench_csv(&rows);
        assert!(csv.starts_with(BENCH_HEADER));
        assert_eq!(csv.lines().count(), 7);
    }
}
