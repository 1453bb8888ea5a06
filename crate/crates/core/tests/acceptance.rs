//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line is printed; pass criterion numbers as arguments to
//! run a subset (`cargo test --test acceptance -- 3 4`).

mod common;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use pmcts::cli::{paired_difference, run_benchmark, Algorithm, BenchmarkRow, BenchmarkSpec, BoardSet, Budget};
use pmcts::mcts::{
    normalize_values, play_episode, puct_scores, search, select_index, EdgeStats, NormalizationMode, SearchConfig,
    SelectParams,
};
use pmcts::policy::{AdamState, ConvPolicy, ConvPolicyConfig, GradCheckOptions, Policy, TrainSample, UniformPolicy};
use pmcts::samegame::{generate_board, BoardSeed};
use pmcts::training::{train_pipeline, GenerationConfig, GenerationReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{cross_check_tree, engine_optimum, ref_optimum, RefGame};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn engine_oracle() -> Outcome {
    let mut transitions = 0;
    let mut boards = 0;
    for i in 0..200u64 {
        let (w, h) = (1 + (i % 4) as usize, 1 + ((i / 4) % 4) as usize);
        let b = generate_board(&BoardSeed::new(1000 + i, w, h, 3)).unwrap();
        let mut seen = HashSet::new();
        transitions += cross_check_tree(&b, &mut seen)?;
        let engine = engine_optimum(&b, &mut HashMap::new());
        let reference = ref_optimum(&RefGame::from_board(&b), &mut HashMap::new());
        if engine != reference {
            return Err(format!("optimum {engine} vs reference {reference} on {b:?}"));
        }
        boards += 1;
    }
    Ok(format!("{boards} boards, {transitions} transitions agree"))
}

fn small_board_optimality() -> Outcome {
    let mut optimal = 0;
    for i in 0..100u64 {
        let b = generate_board(&BoardSeed::new(5000 + i, 3, 3, 3)).unwrap();
        let best = engine_optimum(&b, &mut HashMap::new());
        let cfg = SearchConfig {
            simulations: 1000,
            threads: 1,
            seed: i,
            ..SearchConfig::default()
        };
        let ep = play_episode(&b, &cfg, &Policy::Uniform).unwrap();
        ep.verify().unwrap();
        if ep.final_score == best {
            optimal += 1;
        }
    }
    check(optimal >= 95, format!("{optimal}/100 boards optimal (need 95)"))
}

fn random_edges(rng: &mut ChaCha8Rng) -> Vec<EdgeStats> {
    let k = rng.random_range(1..=12);
    let mut priors: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= sum);
    // a shared optimistic value for unvisited edges, sometimes everything equal
    let init = rng.random_range(-500.0..3000.0);
    let degenerate = rng.random_bool(0.05);
    priors
        .into_iter()
        .map(|prior| {
            let n = if degenerate { 0 } else { rng.random_range(0..40) };
            let q_bar = if n == 0 { init } else { rng.random_range(-500.0..3000.0) };
            EdgeStats {
                n,
                w: 0,
                q_total: q_bar * n as f64,
                q_bar,
                prior,
            }
        })
        .collect()
}

fn normalization_and_selection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = SelectParams {
        c_puct: 1.0,
        virtual_loss_weight: 0.0,
        normalization: NormalizationMode::MeanValues,
    };
    let mut degenerate = 0;
    for fixture in 0..100_000 {
        let edges = random_edges(&mut rng);
        let values: Vec<f64> = edges.iter().map(|e| e.q_bar).collect();
        let normed = normalize_values(&values);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (&v, &x) in values.iter().zip(&normed) {
            if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&x) {
                return Err(format!("fixture {fixture}: {x} outside [-1, 1]"));
            }
            let expect = if hi == lo {
                1.0
            } else {
                2.0 * (v - lo) / (hi - lo) - 1.0
            };
            if (x - expect).abs() > 1e-9 {
                return Err(format!("fixture {fixture}: normalized {x}, expected {expect}"));
            }
        }
        if hi == lo {
            degenerate += 1;
            if normed.iter().any(|&x| x != 1.0) {
                return Err(format!("fixture {fixture}: degenerate values not mapped to 1"));
            }
        }

        let parent: u64 = edges.iter().map(|e| e.n as u64).sum::<u64>().max(1);
        let scale = if rng.random_bool(0.5) {
            2f64.powi(rng.random_range(-20..=20))
        } else {
            rng.random_range(1e-3..1e3)
        };
        let scaled: Vec<EdgeStats> = edges
            .iter()
            .map(|e| EdgeStats {
                q_total: e.q_total * scale,
                q_bar: e.q_bar * scale,
                ..*e
            })
            .collect();
        let tie_seed = rng.random::<u64>();
        let pick = |es: &[EdgeStats]| {
            select_index(es, parent, &params, None, &mut ChaCha8Rng::seed_from_u64(tie_seed)).unwrap()
        };
        let (a, b) = (pick(&edges), pick(&scaled));
        if a != b {
            let s1 = puct_scores(&edges, parent, &params, None);
            let s2 = puct_scores(&scaled, parent, &params, None);
            return Err(format!(
                "fixture {fixture}: argmax {a} became {b} under scale {scale}: {s1:?} vs {s2:?}"
            ));
        }
    }
    Ok(format!(
        "100000 fixtures ({degenerate} degenerate), bounds and scale invariance hold"
    ))
}

fn virtual_loss_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = |h, w, c| {
        Policy::model(UniformPolicy {
            height: h,
            width: w,
            colors: c,
        })
    };
    let mut fixtures = 0;
    while fixtures < 1000 {
        let (w, h, c) = (
            rng.random_range(3..=8),
            rng.random_range(3..=8),
            rng.random_range(2..=5u8),
        );
        let b = generate_board(&BoardSeed::new(rng.random(), w, h, c)).unwrap();
        if b.is_terminal() {
            continue;
        }
        let threads = 1 + fixtures % 32;
        let k = rng.random_range(1..=300);
        let policy = if fixtures % 3 == 2 {
            model(h, w, c)
        } else {
            Policy::Uniform
        };
        let cfg = SearchConfig {
            simulations: k,
            threads,
            seed: rng.random(),
            ..SearchConfig::default()
        };
        let r = search(&b, &cfg, &policy).map_err(|e| format!("fixture {fixtures}: {e}"))?;
        let root_n: u64 = r.root_edges.iter().map(|e| e.stats.n as u64).sum();
        let root_w: u64 = r.root_edges.iter().map(|e| e.stats.w as u64).sum();
        if root_n != k || r.simulations != k || root_w != 0 || r.audit.in_flight != 0 {
            return Err(format!(
                "fixture {fixtures} ({threads} threads, k={k}): root N {root_n}, W {root_w}, tree W {}",
                r.audit.in_flight
            ));
        }
        if r.audit.conservation_violations != 0 {
            return Err(format!("fixture {fixtures}: visit conservation broken"));
        }
        fixtures += 1;
    }
    Ok("1000 searches with 1-32 threads leave no virtual loss; root N = k".into())
}

fn gradient_check_reduced() -> Outcome {
    let cfg = GenerationConfig::preset("desk-7x7").unwrap();
    let net_cfg = cfg.network.build(&cfg.board, 5);
    let net = ConvPolicy::new(net_cfg).unwrap();
    let batch = pmcts::cli::gradcheck_batch(7, 7, 5, 20, 5).unwrap();
    let start = Instant::now();
    let report = pmcts::policy::gradient_check(&net, &batch, &GradCheckOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        report.passed() && report.max_relative_error < 1e-4,
        format!(
            "{} of {} parameters, max relative error {:.2e}, {} failures, {:.1} s",
            report.checked,
            net.num_params(),
            report.max_relative_error,
            report.failures,
            secs
        ),
    )
}

fn overfit_one_batch() -> Outcome {
    let cfg = GenerationConfig::preset("desk-7x7").unwrap();
    let mut net = ConvPolicy::new(cfg.network.build(&cfg.board, 6)).unwrap();
    let batch: Vec<TrainSample> = pmcts::cli::gradcheck_batch(7, 7, 5, 64, 6).unwrap();
    let mut adam = AdamState::new(net.num_params(), 5e-4);
    let mut loss = f64::INFINITY;
    for step in 1..=2000 {
        let (l, grad) = net.loss_and_gradients(&batch).unwrap();
        loss = l;
        if loss < 0.01 {
            return Ok(format!("loss {loss:.4} before step {step}"));
        }
        adam.apply(net.params_mut(), &grad);
    }
    let final_loss = net.loss(&batch).unwrap();
    check(
        final_loss < 0.01,
        format!("loss {final_loss:.4} after 2000 steps (last step {loss:.4})"),
    )
}

struct Trained {
    policy: Policy,
    reports: Vec<GenerationReport>,
    seconds: f64,
    rows: Vec<BenchmarkRow>,
}

/// The desk training run and a 300-board evaluation of all three
/// algorithms, shared by the trend and plain-comparison checks.
fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = GenerationConfig::preset("desk-7x7").unwrap();
        let start = Instant::now();
        let out = train_pipeline(&cfg, None, &mut |r| {
            println!(
                "      generation {}: training mean {:.1}, {} samples, validation loss {:.3}, {:.0} s",
                r.generation,
                r.mean_score,
                r.samples,
                r.validation_loss,
                r.wall_time_ms / 1e3
            )
        })
        .unwrap();
        let seconds = start.elapsed().as_secs_f64();
        let spec = BenchmarkSpec {
            boards: BoardSet::Seeded {
                count: 300,
                width: 7,
                height: 7,
                colors: 5,
            },
            runs: 1,
            algorithms: Algorithm::ALL.to_vec(),
            plain_threads: 1,
            policy_threads: 1,
            search: SearchConfig {
                c_puct: cfg.c_puct,
                ..SearchConfig::default()
            },
            seed: 0xE7A1,
            ..BenchmarkSpec::new(7, 7, 5, Budget::Simulations(cfg.simulations))
        };
        let rows = run_benchmark(&spec, &out.policy, &mut |_| {}).unwrap();
        Trained {
            policy: out.policy,
            reports: out.reports,
            seconds,
            rows,
        }
    })
}

fn mean_of(rows: &[BenchmarkRow], a: Algorithm) -> f64 {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm == a)
        .map(|r| r.score as f64)
        .collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn training_trend() -> Outcome {
    let t = trained();
    assert!(!t.policy.is_uniform() && t.reports.len() == 3);
    let (d, half) = paired_difference(&t.rows, Algorithm::PolicyMctsGuided, Algorithm::PlainMcts).unwrap();
    check(
        d - half > 0.0,
        format!(
            "generation 3 mean {:.1} vs generation 0 {:.1}: difference {d:.1} ± {half:.1} (99%), training {:.0} s",
            mean_of(&t.rows, Algorithm::PolicyMctsGuided),
            mean_of(&t.rows, Algorithm::PlainMcts),
            t.seconds
        ),
    )
}

fn policy_beats_plain() -> Outcome {
    let t = trained();
    let (d, half) = paired_difference(&t.rows, Algorithm::PolicyMctsRandom, Algorithm::PlainMcts).unwrap();
    check(
        d - half > 0.0,
        format!(
            "policy-mcts-random {:.1} vs plain-mcts {:.1}: difference {d:.1} ± {half:.1} (99%)",
            mean_of(&t.rows, Algorithm::PolicyMctsRandom),
            mean_of(&t.rows, Algorithm::PlainMcts)
        ),
    )
}

fn parallel_throughput() -> Outcome {
    let rate = |threads: usize| {
        let (mut sims, mut secs) = (0u64, 0.0);
        for i in 0..20u64 {
            let b = generate_board(&BoardSeed::new(9000 + i, 15, 15, 5)).unwrap();
            let cfg = SearchConfig {
                time_budget_ms: Some(1000),
                threads,
                seed: i,
                ..SearchConfig::default()
            };
            let r = search(&b, &cfg, &Policy::Uniform).unwrap();
            sims += r.simulations;
            secs += r.wall_time_ms / 1e3;
        }
        sims as f64 / secs
    };
    let one = rate(1);
    let sixteen = rate(16);
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    check(
        sixteen >= 2.0 * one,
        format!(
            "1 thread {one:.0} sims/s, 16 threads {sixteen:.0} sims/s, ratio {:.2} (need 2.00) on {cpus} CPU(s)",
            sixteen / one
        ),
    )
}

fn pmcts(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pmcts")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "pmcts {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn without_timing(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            strip_timing(&mut v);
            v
        })
        .collect()
}

fn strip_timing(v: &mut serde_json::Value) {
    if let Some(map) = v.as_object_mut() {
        map.remove("wall_time_ms");
        map.values_mut().for_each(strip_timing);
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let play = |tag: &str| {
        let (log, tele) = (d(&format!("play-{tag}.jsonl")), d(&format!("tele-{tag}.jsonl")));
        let out = pmcts(&[
            "play",
            "--board-seed",
            "3",
            "--width",
            "7",
            "--height",
            "7",
            "--colors",
            "5",
            "--simulations",
            "300",
            "--seed",
            "11",
            "--threads",
            "1",
            "--out",
            &log,
            "--telemetry",
            &tele,
        ]);
        (out.stdout, fs::read(&log).unwrap(), without_timing(Path::new(&tele)))
    };
    if play("a") != play("b") {
        return Err("play transcripts differ".into());
    }

    let config = d("train.toml");
    fs::write(
        &config,
        "preset = \"desk-7x7\"\ngenerations = 2\nruns_per_generation = 8\nsimulations = 10\n\
         training_capacity = 200\nvalidation_capacity = 40\nworkers = 1\nthreads_per_run = 1\nseed = 5\n\
         [network]\npreset = \"tiny\"\n[train]\nmax_epochs = 3\nbatch_size = 32\n",
    )
    .unwrap();
    let (a, b) = (d("run-a"), d("run-b"));
    pmcts(&["train", "--config", &config, "--out", &a]);
    pmcts(&["train", "--config", &config, "--out", &b]);
    for g in ["gen-001", "gen-002"] {
        for f in ["model.bin", "samples.jsonl"] {
            let (x, y) = (Path::new(&a).join(g).join(f), Path::new(&b).join(g).join(f));
            if fs::read(&x).unwrap() != fs::read(&y).unwrap() {
                return Err(format!("{g}/{f} differs between runs"));
            }
        }
    }
    let (ra, rb) = (
        without_timing(&Path::new(&a).join("reports.jsonl")),
        without_timing(&Path::new(&b).join("reports.jsonl")),
    );
    check(
        ra == rb && ra.len() == 2,
        "play transcripts, episode logs, models, buffer snapshots and reports are identical".into(),
    )
}

fn presets() -> Outcome {
    let rows = [
        ("7x7", 50, 20_000, 100, 30.0, 0.75),
        ("10x10", 50, 10_000, 50, 4.0, 0.40),
        ("15x15", 66, 5_000, 25, 2.0, 0.25),
    ];
    for (name, gens, runs, sims, c, alpha) in rows {
        let p = GenerationConfig::preset(name).unwrap();
        let got = (
            p.generations,
            p.runs_per_generation,
            p.simulations,
            p.c_puct,
            p.dirichlet_alpha,
        );
        if got != (gens, runs, sims, c, alpha) || p.threads_per_run != 1 || p.dirichlet_epsilon != 0.25 {
            return Err(format!("{name}: {got:?}"));
        }
        let from_file = GenerationConfig::from_toml(&format!("preset = \"{name}\"")).unwrap();
        if from_file != p {
            return Err(format!("{name}: config file preset differs"));
        }
    }
    let d = GenerationConfig::preset("desk-7x7").unwrap();
    let net = ConvPolicyConfig::desk(7, 7, 5, 0);
    check(
        (d.generations, d.runs_per_generation, d.simulations) == (3, 300, 50)
            && d.dirichlet_alpha == 0.75
            && d.network.build(&d.board, 0).layers == net.layers,
        "per-size presets and the desk preset load exactly".into(),
    )
}

fn main() {
    // (name, check, time limit in seconds); the shared training and
    // evaluation run is charged to criterion 7
    let criteria: [(&str, fn() -> Outcome, Option<f64>); 11] = [
        ("engine matches an independent reference", engine_oracle, Some(120.0)),
        (
            "plain MCTS finds optimal 3x3 scores",
            small_board_optimality,
            Some(300.0),
        ),
        (
            "normalization bounds and scale-invariant selection",
            normalization_and_selection,
            None,
        ),
        (
            "virtual loss fully released after search",
            virtual_loss_accounting,
            None,
        ),
        ("reduced network gradient check", gradient_check_reduced, Some(60.0)),
        ("overfit one batch", overfit_one_batch, Some(120.0)),
        ("desk training improves on generation 0", training_trend, Some(1800.0)),
        (
            "policy MCTS beats plain MCTS at equal simulations",
            policy_beats_plain,
            Some(900.0),
        ),
        (
            "16 threads at least double simulation throughput",
            parallel_throughput,
            Some(600.0),
        ),
        ("play and train are bit-reproducible", determinism, None),
        ("training presets", presets, None),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(detail), Some(max)) if secs > *max => Err(format!("{detail}; took longer than {max:.0} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1} s]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
