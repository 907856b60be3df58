//! End-to-end acceptance run.
//!
//! Runs every criterion, prints one PASS/FAIL line for each, and exits
//! non-zero if any failed. Built with `harness = false` so the lines are
//! printed even when the run succeeds.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cdrm::binref::{input_probe_grid, oracle_agreement, BinGrid};
use cdrm::cli::{fit_model, run_bench, BenchArgs, RunConfig};
use cdrm::data::{gen_room, gen_toy, RoomLayout, ToyConfig};
use cdrm::metrics::{auprc, auroc, evaluate_room, CdrmScorer, RoomMetrics, ScoredProbe};
use cdrm::nnet::MlpNetwork;
use cdrm::{infer, BandwidthRule, CdrmModel, InferenceConfig, KdeStats, TransitionDataset};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// A toy model trained with the default regime, with its wall time.
struct ToyRun {
    model: CdrmModel,
    dataset: TransitionDataset,
    elapsed: Duration,
}

fn toy_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig { seed, ..RunConfig::default() };
    cfg.train.seed = seed;
    cfg
}

fn train_toy(seed: u64, multimodal: bool) -> ToyRun {
    let t = Instant::now();
    let dataset = gen_toy(&ToyConfig { multimodal, seed, ..ToyConfig::default() }).unwrap();
    let (model, _) = fit_model(&dataset, &toy_config(seed)).unwrap();
    ToyRun { model, dataset, elapsed: t.elapsed() }
}

#[derive(Default)]
struct Fixtures {
    unimodal: Vec<Option<ToyRun>>,
    multimodal: Option<ToyRun>,
}

impl Fixtures {
    fn unimodal(&mut self, seed: u64) -> &ToyRun {
        let i = seed as usize;
        if self.unimodal.len() <= i {
            self.unimodal.resize_with(i + 1, || None);
        }
        self.unimodal[i].get_or_insert_with(|| train_toy(seed, false))
    }

    fn multimodal(&mut self) -> &ToyRun {
        self.multimodal.get_or_insert_with(|| train_toy(0, true))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    // both gradients vanishing counts as agreement
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

fn gradient_check(_: &mut Fixtures) -> Outcome {
    let t = Instant::now();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    for net_idx in 0..20 {
        let d_in = 1 + net_idx % 3;
        let layer_dims: Vec<usize> = match net_idx % 4 {
            0 => vec![d_in, 1],
            1 => vec![d_in, 8, 1],
            2 => vec![d_in, 8, 16, 1],
            _ => vec![d_in, 8, 16, 8, 1],
        };
        let net = MlpNetwork::xavier(&layer_dims, &mut rng).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect();

            let analytic = net.grad_input(&x).unwrap();
            let numeric: Vec<f64> = (0..d_in)
                .map(|j| {
                    let mut up = x.clone();
                    let mut down = x.clone();
                    up[j] += h;
                    down[j] -= h;
                    (net.forward(&up).unwrap() - net.forward(&down).unwrap()) / (2.0 * h)
                })
                .collect();
            worst = worst.max(rel_err(&analytic, &numeric));

            let analytic: Vec<f64> = net.grad_params(&x, 1.0).unwrap().iter().collect();
            let mut numeric = Vec::with_capacity(analytic.len());
            let weights = net.weights().to_vec();
            let biases = net.biases().to_vec();
            let eval = |w: Vec<Array2<f64>>, b: Vec<Array1<f64>>| {
                MlpNetwork::from_parts(w, b).unwrap().forward(&x).unwrap()
            };
            // same order as `ParamGradient::iter`: every weight, then every bias
            for layer in 0..weights.len() {
                for idx in 0..weights[layer].len() {
                    let (mut up, mut down) = (weights.clone(), weights.clone());
                    up[layer].as_slice_mut().unwrap()[idx] += h;
                    down[layer].as_slice_mut().unwrap()[idx] -= h;
                    numeric.push(
                        (eval(up, biases.clone()) - eval(down, biases.clone())) / (2.0 * h),
                    );
                }
            }
            for layer in 0..biases.len() {
                for idx in 0..biases[layer].len() {
                    let (mut up, mut down) = (biases.clone(), biases.clone());
                    up[layer][idx] += h;
                    down[layer][idx] -= h;
                    numeric.push(
                        (eval(weights.clone(), up) - eval(weights.clone(), down)) / (2.0 * h),
                    );
                }
            }
            worst = worst.max(rel_err(&analytic, &numeric));
        }
    }
    let elapsed = t.elapsed();
    Outcome::new(
        worst < 1e-4 && elapsed < Duration::from_secs(5),
        format!("worst relative error {worst:.2e} (< 1e-4), {elapsed:.2?} (< 5 s)"),
    )
}

fn toy_gap(fx: &mut Fixtures) -> Outcome {
    let run = fx.unimodal(0);
    let t = Instant::now();
    let cfg = InferenceConfig::default();
    let xs = linspace(-0.30, 0.30, 21);
    let empty = xs
        .iter()
        .enumerate()
        .filter(|(i, &x)| {
            let r = infer(&run.model, &[x], &cfg, *i as u64).unwrap();
            r.valid_count == 0 && r.eu == 1.0 && r.prediction.is_none()
        })
        .count();
    let total = run.elapsed + t.elapsed();
    Outcome::new(
        empty * 10 >= xs.len() * 9 && total < Duration::from_secs(120),
        format!("{empty}/21 gap probes empty with EU = 1 (>= 19), {total:.1?} incl. training (< 120 s)"),
    )
}

/// AU at ten probes over `[lo, hi]`; `None` where the valid set came back empty.
fn au_profile(model: &CdrmModel, lo: f64, hi: f64) -> Vec<Option<f64>> {
    let cfg = InferenceConfig::default();
    linspace(lo, hi, 10)
        .iter()
        .enumerate()
        .map(|(i, &x)| infer(model, &[x], &cfg, 100 + i as u64).unwrap().au)
        .collect()
}

fn mean_au(profile: &[Option<f64>]) -> Option<f64> {
    let vals: Option<Vec<f64>> = profile.iter().copied().collect();
    vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

fn toy_au(fx: &mut Fixtures) -> Outcome {
    let mut passed = 0;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let model = &fx.unimodal(seed).model;
        let left = mean_au(&au_profile(model, -0.95, -0.40));
        let right = mean_au(&au_profile(model, 0.40, 0.95));
        let ok = matches!((left, right), (Some(l), Some(r)) if l < 0.10 && (0.20..=0.45).contains(&r));
        passed += ok as usize;
        let show = |v: Option<f64>| v.map_or("empty probe".to_string(), |v| format!("{v:.3}"));
        parts.push(format!("seed {seed}: left {} right {}", show(left), show(right)));
    }
    Outcome::new(passed >= 2, format!("{passed}/3 seeds pass (>= 2); {}", parts.join("; ")))
}

fn multimodal(fx: &mut Fixtures) -> Outcome {
    let uni = mean_au(&au_profile(&fx.unimodal(0).model, -0.95, -0.40));
    let model = &fx.multimodal().model;
    let cfg = InferenceConfig::default();
    let mut bad = Vec::new();
    let mut returned = 0;
    for (i, &x) in linspace(-0.95, -0.40, 10).iter().enumerate() {
        let r = infer(model, &[x], &cfg, 100 + i as u64).unwrap();
        if let Some(p) = r.prediction {
            returned += 1;
            let y = p[0];
            let on_branch = (y - x.sin()).abs() < 0.15 || (y + x.sin()).abs() < 0.15;
            let averaged = x.sin().abs() > 0.45 && y.abs() < 0.15;
            if !on_branch || averaged {
                bad.push(format!("x={x:.2} y={y:.3}"));
            }
        }
    }
    let multi = mean_au(&au_profile(model, -0.95, -0.40));
    let au_ok = matches!((multi, uni), (Some(m), Some(u)) if m > u);
    Outcome::new(
        bad.is_empty() && au_ok,
        format!(
            "{returned} predictions, off-branch: [{}]; mean AU multimodal {:?} vs unimodal {:?}",
            bad.join(", "),
            multi,
            uni
        ),
    )
}

/// Settings used for the room run. Langevin-hardened negatives gather on the
/// noisy region's broad score plateau, which holds it near
/// `p_data / (p_data + p_neg)`, well below 0.5, so the validity threshold sits
/// under it. The median bandwidth spans most of the room and Scott's rule
/// resolves the hidden corner. The chain budget is reduced to keep three
/// seeds inside the time limit.
fn room_config(seed: u64) -> RunConfig {
    let mut cfg = toy_config(seed);
    cfg.inference = InferenceConfig {
        n_samples: 128,
        steps: 25,
        alpha: 0.15,
        ..InferenceConfig::default()
    };
    cfg.bandwidth = BandwidthRule::Scott;
    cfg
}

fn room(_: &mut Fixtures) -> Outcome {
    let t = Instant::now();
    let layout = RoomLayout::default();
    let mut passed = 0;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let cfg = room_config(seed);
        let dataset = gen_room(5000, &layout, seed).unwrap();
        let (model, _) = fit_model(&dataset, &cfg).unwrap();
        let scorer = CdrmScorer { model: &model, config: cfg.inference };
        let m: RoomMetrics = evaluate_room(&scorer, &layout, cfg.eval_resolution, seed).unwrap().metrics;
        let ok = m.eu_auroc >= 0.90 && m.eu_auprc >= 0.85 && m.au_auroc >= 0.75 && m.au_auprc >= 0.55;
        passed += ok as usize;
        parts.push(format!(
            "seed {seed}: eu {:.3}/{:.3} au {:.3}/{:.3}",
            m.eu_auroc, m.eu_auprc, m.au_auroc, m.au_auprc
        ));
    }
    let elapsed = t.elapsed();
    Outcome::new(
        passed >= 2 && elapsed < Duration::from_secs(600),
        format!("{passed}/3 seeds pass (>= 2), {elapsed:.0?} (< 600 s); {}", parts.join("; ")),
    )
}

fn bin_oracle(fx: &mut Fixtures) -> Outcome {
    let run = fx.unimodal(0);
    let grid = BinGrid::build(&run.dataset, 100, run.dataset.bounds()).unwrap();
    let probes = input_probe_grid(&run.dataset, 50).unwrap();
    let report = oracle_agreement(&run.model, &grid, &probes, &InferenceConfig::default(), 0).unwrap();
    Outcome::new(
        report.fraction >= 0.9,
        format!("{}/{} probes agree (>= 90%)", report.agreed, report.probes.len()),
    )
}

fn scored(scores: &[f64], labels: &[bool]) -> Vec<ScoredProbe> {
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&score, &label))| ScoredProbe { probe_input: vec![i as f64], score, label })
        .collect()
}

fn brute_auroc(probes: &[ScoredProbe]) -> f64 {
    let mut wins = 0.0;
    let (mut n_pos, mut n_neg) = (0.0, 0.0);
    for p in probes.iter().filter(|p| p.label) {
        n_pos += 1.0;
        for q in probes.iter().filter(|q| !q.label) {
            if p.score > q.score {
                wins += 1.0;
            } else if p.score == q.score {
                wins += 0.5;
            }
        }
    }
    for _ in probes.iter().filter(|p| !p.label) {
        n_neg += 1.0;
    }
    wins / (n_pos * n_neg)
}

fn metric_oracles(_: &mut Fixtures) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0C);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        // a coarse score grid produces ties
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64 / 11.0).collect();
        let probes = scored(&scores, &labels);
        if auroc(&probes).unwrap() != brute_auroc(&probes) {
            mismatches += 1;
        }
    }
    let perfect = auprc(&scored(&[0.9, 0.8, 0.1], &[true, true, false])).unwrap() == 1.0;
    let last = (1..6).all(|k| {
        let mut s = vec![1.0; k];
        let mut l = vec![false; k];
        s.push(0.0);
        l.push(true);
        auprc(&scored(&s, &l)).unwrap() == 1.0 / (k + 1) as f64
    });
    let v = auprc(&scored(&[0.9, 0.8, 0.7], &[true, false, true])).unwrap();
    // recall 1/2 at precision 1, then recall 1 at precision 2/3
    let steps = v == 0.5 * 1.0 + 0.5 * (2.0 / 3.0) && (v - 5.0 / 6.0).abs() < 1e-15;
    Outcome::new(
        mismatches == 0 && perfect && last && steps,
        format!(
            "auroc mismatches {mismatches}/100; auprc perfect {perfect}, last-ranked {last}, two-step {steps}"
        ),
    )
}

fn kde_properties(_: &mut Fixtures) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4DE);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(3..40);
        let refs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let h = rng.random_range(0.05..1.0);
        let stats = KdeStats::from_references(refs.clone(), h).unwrap();

        let mut probes = Vec::with_capacity(100);
        for _ in 0..100 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            let mut direct = 0.0;
            for r in &refs {
                let d2: f64 = q.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
                direct += (-d2 / (2.0 * h * h)).exp();
            }
            direct /= refs.len() as f64;
            let got = stats.density(&q).unwrap();
            if direct > 0.0 {
                worst = worst.max((got - direct).abs() / direct);
            }
            probes.push((got, stats.base_eu(&q).unwrap()));
        }
        probes.sort_by(|a, b| a.0.total_cmp(&b.0));
        monotone &= probes.windows(2).all(|w| w[1].1 <= w[0].1);
    }
    Outcome::new(
        worst < 1e-12 && monotone,
        format!("worst density relative error {worst:.2e} (< 1e-12), base_eu monotone {monotone}"),
    )
}

fn cdrm(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_cdrm")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn determinism(_: &mut Fixtures) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_string();
    let cfg = p("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"train": {"epochs": 5, "batches_per_epoch": 20}, "inference": {"n_samples": 32, "steps": 5}, "eval_resolution": 8}"#,
    )
    .unwrap();
    cdrm(&["gen", "room", "--steps", "1000", "--seed", "4", "--out", &s(&p("room.csv"))]);

    let mut runs = Vec::new();
    for tag in ["a", "b"] {
        let model = p(&format!("{tag}.json"));
        let metrics = p(&format!("{tag}.csv"));
        cdrm(&[
            "train", "--data", &s(&p("room.csv")), "--config", &s(&cfg), "--seed", "9", "--out", &s(&model),
        ]);
        cdrm(&["eval", "--model", &s(&model), "--config", &s(&cfg), "--seed", "9", "--out", &s(&metrics)]);
        runs.push([
            read(&model),
            read(&p(&format!("{tag}.json.loss.csv"))),
            read(&metrics),
            read(&p(&format!("{tag}.csv.probes.csv"))),
        ]);
    }
    let same = runs[0] == runs[1];
    Outcome::new(same, format!("model, loss trace, metrics and probe dump identical: {same}"))
}

fn bench(_: &mut Fixtures) -> Outcome {
    let args = BenchArgs {
        bins: "1,8,32,128,512".into(),
        steps: "5,10,25,50".into(),
        reps: 5,
        samples: 512,
        queries: 64,
        d_s: 1,
        d_a: 1,
        hidden: "64,128,64".into(),
        seed: 0,
        out: "unused".into(),
    };
    let rows = run_bench(&args).unwrap();
    let mut bins: Vec<(usize, u64)> = rows.iter().map(|r| (r.b, r.bin_ns)).collect();
    bins.dedup();
    let mut steps: Vec<(usize, u64)> = rows.iter().filter(|r| r.b == 1).map(|r| (r.l, r.cdrm_ns)).collect();
    steps.sort_unstable();
    let bin_ok = bins.windows(2).all(|w| w[1].1 >= w[0].1);
    let cdrm_ok = steps.windows(2).all(|w| w[1].1 >= w[0].1);
    Outcome::new(
        bin_ok && cdrm_ok,
        format!("bin ns by b {bins:?}; CDRM ns by L {steps:?}"),
    )
}

type Criterion = fn(&mut Fixtures) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("gradient correctness", gradient_check),
        ("toy gap is epistemic", toy_gap),
        ("toy AU disentanglement", toy_au),
        ("multimodal no averaging", multimodal),
        ("room exploration", room),
        ("bin oracle agreement", bin_oracle),
        ("metric oracles", metric_oracles),
        ("KDE properties", kde_properties),
        ("determinism", determinism),
        ("bench sanity", bench),
    ];
    // run a subset by passing criterion numbers, e.g. `-- 1 7 8`
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();

    let mut fx = Fixtures::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut fx)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        if !outcome.pass {
            failed += 1;
        }
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:2} {tag}  {name}: {}", outcome.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
