//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p smell-cli --test acceptance`.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smell::data::{make_folds, PairKind};
use smell::datasets::{self, synthesize, SynthKind, SynthParams};
use smell::eval::{cross_validate, knn_classify, prepare_dataset, run_ablations, Euclidean, MetricKind, SmellDistance};
use smell::kernel::{student_t_scores, MarkerSet};
use smell::nn::{self, InitScheme, Parameters};
use smell::objective::{objective, objective_value, LossConstants, Q_CLAMP};
use smell::report::{write_reports, ResultRow};
use smell::theory::{default_grid, risk_consistency_report, risk_numerical, DEFAULT_TOL};
use smell::trainer::{proposition1_check, train, TrainConfig};
use smell::{Autoencoder64, MarkerSet64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_config() -> TrainConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// ---------------------------------------------------------------- gradients

struct Instance {
    net: Autoencoder64,
    markers: MarkerSet64,
    left: Array2<f64>,
    right: Array2<f64>,
    kinds: Vec<PairKind>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let init = InitScheme {
        weight_mean: 0.0,
        weight_std: 0.7,
        bias_mean: 0.0,
        bias_std: 0.3,
    };
    let net = nn::init_params(3, 2, &[4], &init, rng.random()).unwrap();
    let mut uniform = |r: usize, c: usize, hi: f64| Array2::from_shape_fn((r, c), |_| rng.random::<f64>() * hi);
    let markers = MarkerSet::new(uniform(2, 2, 1.5), uniform(2, 2, 1.5)).unwrap();
    let (left, right) = (uniform(4, 3, 1.0), uniform(4, 3, 1.0));
    let kinds = [PairKind::Similar, PairKind::Dissimilar, PairKind::Dissimilar, PairKind::Similar].to_vec();
    Instance {
        net,
        markers,
        left,
        right,
        kinds,
    }
}

fn away_from_kinks(inst: &Instance) -> bool {
    let x = concatenate![Axis(0), inst.left, inst.right];
    let (z, enc) = inst.net.encoder.forward(x.view()).unwrap();
    let (_, dec) = inst.net.decoder.forward(z.view()).unwrap();
    let hidden_ok = |pre: &[Array2<f64>]| pre[..pre.len() - 1].iter().all(|a| a.iter().all(|v| v.abs() > 1e-5));
    if !hidden_ok(enc.pre_activations()) || !hidden_ok(dec.pre_activations()) {
        return false;
    }
    (0..4).all(|p| {
        let s = (&z.row(p) - &z.row(p + 4)).mapv(f64::abs);
        let q = student_t_scores(s.view(), &inst.markers).unwrap();
        s.iter().all(|&v| v > 1e-5) && q.q_plus > 10.0 * Q_CLAMP && q.q_minus > 10.0 * Q_CLAMP
    })
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn gradient_suite() -> Outcome {
    const STEP: f64 = 1e-5;
    let c = LossConstants {
        r_hc: 1.0,
        r_r: 0.3,
        r_d: 0.1,
        epsilon: 1e-3,
    };
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    let mut worst_oracle = 0.0_f64;
    let mut tested = 0;
    while tested < 24 {
        let inst = random_instance(&mut rng);
        if !away_from_kinks(&inst) {
            continue;
        }
        tested += 1;
        let value = |net: &Autoencoder64, m: &MarkerSet64| {
            objective_value(net, m, inst.left.view(), inst.right.view(), &inst.kinds, &c)
                .unwrap()
                .total
        };
        let naive = support::naive_total_loss(&inst.net, &inst.markers, &rows(&inst.left), &rows(&inst.right), &inst.kinds, &c);
        let lib = value(&inst.net, &inst.markers);
        worst_oracle = worst_oracle.max((naive - lib).abs() / lib.abs().max(1.0));

        let g = objective(&inst.net, &inst.markers, inst.left.view(), inst.right.view(), &inst.kinds, &c).unwrap();
        let analytic: Vec<f64> = g
            .encoder
            .tensors()
            .iter()
            .chain(g.decoder.tensors().iter())
            .flat_map(|t| t.iter().copied().collect::<Vec<_>>())
            .chain(g.markers.positive.iter().copied())
            .chain(g.markers.negative.iter().copied())
            .collect();
        let n_net: usize = inst.net.tensors().iter().map(|t| t.len()).sum();
        for (idx, &a) in analytic.iter().enumerate() {
            let bumped = |delta: f64| {
                let mut net = inst.net.clone();
                let mut markers = inst.markers.clone();
                if idx < n_net {
                    let mut seen = 0;
                    for mut t in net.tensors_mut() {
                        if idx < seen + t.len() {
                            *t.iter_mut().nth(idx - seen).unwrap() += delta;
                            break;
                        }
                        seen += t.len();
                    }
                } else {
                    let m = idx - n_net;
                    let np = markers.positive.len();
                    if m < np {
                        *markers.positive.iter_mut().nth(m).unwrap() += delta;
                    } else {
                        *markers.negative.iter_mut().nth(m - np).unwrap() += delta;
                    }
                }
                value(&net, &markers)
            };
            let numeric = (bumped(STEP) - bumped(-STEP)) / (2.0 * STEP);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && worst_oracle < 1e-12 && elapsed < Duration::from_secs(10),
        format!(
            "{tested} instances, worst relative error {worst:.2e}, naive loss oracle deviation {worst_oracle:.1e}, {elapsed:.2?}"
        ),
    )
}

// ---------------------------------------------------------------- kernel

fn kernel_normalization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_pair = 0.0_f64;
    let mut worst_sum = 0.0_f64;
    for _ in 0..10_000 {
        let dim = rng.random_range(1..=8);
        let k = rng.random_range(1..=4);
        let neg = rng.random_range(1..=4);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut draw = |r: usize| Array2::from_shape_fn((r, dim), |_| rng.random::<f64>() * scale);
        let markers = MarkerSet::new(draw(k), draw(neg)).unwrap();
        let s = Array1::from_shape_fn(dim, |_| rng.random::<f64>() * scale);
        let q = student_t_scores(s.view(), &markers).unwrap();
        worst_pair = worst_pair.max((q.q_plus + q.q_minus - 1.0).abs());
        worst_sum = worst_sum.max((q.per_marker.iter().sum::<f64>() - 1.0).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst_pair < 1e-12 && worst_sum < 1e-12 && elapsed < Duration::from_secs(5),
        format!("10000 draws, max |q+ + q- - 1| = {worst_pair:.1e}, max |sum q_m - 1| = {worst_sum:.1e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- benchmarks

fn mean_accuracy(dataset: &smell::Dataset64, config: &TrainConfig, metrics: &[MetricKind]) -> Vec<(MetricKind, f64, f64)> {
    let d = prepare_dataset(dataset, config).unwrap();
    cross_validate(&d, config, metrics)
        .unwrap()
        .iter()
        .map(|m| {
            let (mean, std) = m.mean_std();
            (m.metric, mean, std)
        })
        .collect()
}

fn monk2_reproduction() -> Outcome {
    let start = Instant::now();
    let r = mean_accuracy(&datasets::monk2(), &desk_config(), &[MetricKind::Smell]);
    let (_, mean, std) = r[0];
    check(mean >= 0.98, format!("SMELL {mean:.4} +- {std:.4} (need >= 0.98), {:.1?}", start.elapsed()))
}

fn iris_reproduction() -> Outcome {
    let start = Instant::now();
    let r = mean_accuracy(&datasets::iris(), &desk_config(), &[MetricKind::Smell, MetricKind::RawEuclidean]);
    let (smell, raw) = (r[0].1, r[1].1);
    check(
        smell >= 0.93 && raw >= 0.92,
        format!(
            "SMELL {smell:.4} +- {:.4} (need >= 0.93), raw euclidean {raw:.4} +- {:.4} (need >= 0.92), {:.1?}",
            r[0].2,
            r[1].2,
            start.elapsed()
        ),
    )
}

fn ablation_ordering() -> Outcome {
    let start = Instant::now();
    let base = desk_config();
    let mut names: Vec<&'static str> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    const SEEDS: u64 = 5;
    for seed in 0..SEEDS {
        let raw: smell::Dataset64 = synthesize(
            SynthKind::DisjointRegions,
            &SynthParams {
                rows: 200,
                separation: 3.0,
                noise_dims: 0,
                seed,
            },
        )
        .unwrap();
        let config = base.with_seed(seed);
        let d = prepare_dataset(&raw, &config).unwrap();
        for (i, r) in run_ablations(&d, &config).unwrap().iter().enumerate() {
            let acc: Vec<f64> = r.folds.iter().map(|f| f.accuracy).collect();
            let mean = acc.iter().sum::<f64>() / acc.len() as f64;
            if names.len() <= i {
                names.push(r.variant.name);
                sums.push(0.0);
            }
            sums[i] += mean;
        }
    }
    let mean_of = |name: &str| sums[names.iter().position(|n| *n == name).unwrap()] / SEEDS as f64;
    let (full, euclid, no_rd) = (mean_of("full"), mean_of("euclidean"), mean_of("r_d=0"));
    let table: Vec<String> = names.iter().map(|n| format!("{n} {:.4}", mean_of(n))).collect();
    check(
        full > euclid && full > no_rd,
        format!("5-seed means: {} ({:.1?})", table.join(", "), start.elapsed()),
    )
}

fn proposition1() -> Outcome {
    let start = Instant::now();
    let base = desk_config();
    let mut holds = 0;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let raw: smell::Dataset64 = synthesize(
            SynthKind::TwoGaussians,
            &SynthParams {
                rows: 200,
                seed,
                ..SynthParams::default()
            },
        )
        .unwrap();
        let config = base.with_seed(seed);
        let d = prepare_dataset(&raw, &config).unwrap();
        let model = train(&d, &make_folds(&d, seed), None, &config).unwrap();
        let r = proposition1_check(&model.markers);
        holds += usize::from(r.holds);
        detail.push(format!("{:.3}<{:.3}", r.min_pos_norm, r.min_neg_norm));
    }
    check(
        holds >= 4,
        format!("holds on {holds}/5 seeds (min |mu+|^2 < min |mu-|^2: {}), {:.1?}", detail.join(" "), start.elapsed()),
    )
}

// ---------------------------------------------------------------- theory

fn risk_audit() -> Outcome {
    let start = Instant::now();
    let grid = default_grid();
    let report = risk_consistency_report(&grid, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let again = risk_consistency_report(&grid, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let deterministic = report.rows.iter().zip(&again.rows).all(|(a, b)| a.flag() == b.flag() && a.numerical == b.numerical);
    let mut inconsistent = 0;
    let mut worst_ratio = 0.0_f64;
    for row in &report.rows {
        let half = risk_numerical(smell::theory::RiskInput::new(row.d_plus, row.d_minus).unwrap(), DEFAULT_TOL / 2.0)
            .map_err(|e| e.to_string())?;
        let change = (half.value - row.numerical).abs();
        if change > row.error_estimate {
            inconsistent += 1;
        }
        if row.error_estimate > 0.0 {
            worst_ratio = worst_ratio.max(change / row.error_estimate);
        }
    }
    check(
        report.rows.len() == 25 && deterministic && inconsistent == 0,
        format!(
            "25-point grid, halving-tolerance change / error estimate <= {worst_ratio:.3}, {} rows flagged against the printed closed form (max deviation {:.4}), {:.1?}",
            report.mismatches,
            report.max_abs_deviation,
            start.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- knn

fn knn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut queries = 0;
    let mut mismatches = 0;
    let mut worst_distance_gap = 0.0_f64;
    for _ in 0..50 {
        let n = rng.random_range(4..=200);
        let dim = rng.random_range(1..=6);
        let latent = rng.random_range(1..=4);
        let classes = rng.random_range(2..=4);
        let mut x = Array2::from_shape_fn((n, dim), |_| (rng.random::<f64>() * 8.0).round() / 4.0);
        for r in 1..n {
            if rng.random_bool(0.2) {
                let src = x.row(rng.random_range(0..r)).to_owned();
                x.row_mut(r).assign(&src);
            }
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(1..=classes)).collect();
        let init = InitScheme {
            weight_mean: 0.0,
            weight_std: 0.5,
            bias_mean: 0.0,
            bias_std: 0.1,
        };
        let net: Autoencoder64 = nn::init_params(dim, latent, &[8], &init, rng.random()).unwrap();
        let z = net.encode(x.view()).unwrap();
        let mut draw = |r: usize| Array2::from_shape_fn((r, latent), |_| rng.random::<f64>());
        let markers = MarkerSet::new(draw(3), draw(2)).unwrap();
        let smell_metric = SmellDistance { markers: &markers };

        for _ in 0..10 {
            let query = Array1::from_shape_fn(dim, |_| (rng.random::<f64>() * 8.0).round() / 4.0);
            let qz = net.encode(query.view().insert_axis(Axis(0))).unwrap().row(0).to_owned();
            for kind in MetricKind::ALL {
                let (space, q): (&Array2<f64>, &Array1<f64>) = match kind {
                    MetricKind::RawEuclidean => (&x, &query),
                    _ => (&z, &qz),
                };
                let dist: Vec<f64> = space
                    .rows()
                    .into_iter()
                    .map(|r| match kind {
                        MetricKind::Smell => {
                            let s: Vec<f64> = q.iter().zip(r.iter()).map(|(a, b)| (a - b).abs()).collect();
                            let naive = support::naive_q(&s, &markers).1;
                            let lib = smell::eval::PairDistance::distance(&smell_metric, q.view(), r);
                            worst_distance_gap = worst_distance_gap.max((naive - lib).abs());
                            lib
                        }
                        _ => {
                            let naive = q.iter().zip(r.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                            let lib = smell::eval::PairDistance::<f64>::distance(&Euclidean, q.view(), r);
                            worst_distance_gap = worst_distance_gap.max((naive - lib).abs());
                            lib
                        }
                    })
                    .collect();
                let got = match kind {
                    MetricKind::Smell => knn_classify(space.view(), &labels, q.view(), &smell_metric, 3),
                    _ => knn_classify(space.view(), &labels, q.view(), &Euclidean, 3),
                };
                queries += 1;
                if got != support::brute_force_knn(&dist, &labels) {
                    mismatches += 1;
                }
            }
        }
    }
    check(
        mismatches == 0 && worst_distance_gap < 1e-12,
        format!("50 datasets, {queries} queries over 3 metric kinds, {mismatches} disagreements, distance oracle gap {worst_distance_gap:.1e}"),
    )
}

// ---------------------------------------------------------------- cli

fn smell_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smell"))
}

fn run(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

const SMALL_FLAGS: [&str; 12] = [
    "--hidden",
    "16,16",
    "--latent-dim",
    "8",
    "--pretrain-epochs",
    "3",
    "--joint-epochs",
    "6",
    "--seed",
    "5",
    "--batch-size",
    "16",
];

fn eval_into(dir: &Path, extra: &[&str]) -> Result<(), String> {
    run(smell_bin()
        .arg("eval")
        .args(extra)
        .args(SMALL_FLAGS)
        .arg("--out")
        .arg(dir))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        eval_into(dir, &["--builtin", "iris"])?;
    }
    let mut compared = Vec::new();
    for name in ["results.csv", "dataset_summary.csv", "summary.csv", "manifest.json"] {
        let (x, y) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
        compared.push(format!("{name} ({} bytes)", x.len()));
    }
    Ok(format!("byte-identical: {}", compared.join(", ")))
}

fn aggregation() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let synth: PathBuf = tmp.path().join("regions.csv");
    run(smell_bin()
        .args(["synth", "--kind", "disjoint-regions", "--rows", "100", "--separation", "3", "--out"])
        .arg(&synth))?;
    let out = tmp.path().join("eval");
    eval_into(&out, &["--builtin", "iris", "--builtin", "monk2", "--data", synth.to_str().unwrap(), "--has-header"])?;
    let want = support::summary_from_results(&out.join("results.csv"));
    let got = support::read_summary(&out.join("summary.csv"));
    if want != got {
        return Err(format!("cli summary {got:?} != recomputed {want:?}"));
    }

    // hand-made folds with exact ties between methods
    let tied = tmp.path().join("tied");
    std::fs::create_dir(&tied).unwrap();
    let mut rows = Vec::new();
    let table = [("d1", [0.5, 0.5, 0.25]), ("d2", [0.75, 1.0, 1.0]), ("d3", [0.1, 0.2, 0.3])];
    for (d, accs) in table {
        for (m, acc) in ["a", "b", "c"].iter().zip(accs) {
            for fold in 0..10 {
                let jitter = if fold % 2 == 0 { 0.125 } else { -0.125 };
                rows.push(ResultRow {
                    dataset: d.into(),
                    method: (*m).into(),
                    fold,
                    accuracy: acc + jitter * acc,
                });
            }
        }
    }
    write_reports(&tied, &rows).unwrap();
    let want_tied = support::summary_from_results(&tied.join("results.csv"));
    let got_tied = support::read_summary(&tied.join("summary.csv"));
    check(
        want_tied == got_tied,
        format!("{} methods on 3 datasets and a tied 3x3 table match exactly", got.len()),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient suite", gradient_suite),
        ("kernel normalization", kernel_normalization),
        ("monk-2 reproduction", monk2_reproduction),
        ("iris reproduction", iris_reproduction),
        ("ablation ordering", ablation_ordering),
        ("proposition 1 check", proposition1),
        ("risk audit", risk_audit),
        ("knn oracle equivalence", knn_oracle),
        ("determinism", determinism),
        ("aggregation correctness", aggregation),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
