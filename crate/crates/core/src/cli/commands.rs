use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bench::{format_summary, run_benchmark, summarize, write_csv, Algorithm, BenchmarkSpec, BoardSet, Budget};
use super::positions::{format_positions_report, position_search_config, run_positions};
use crate::error::{Error, Result};
use crate::mcts::{play_episode, search, write_telemetry, RolloutMode, SearchConfig};
use crate::policy::{
    gradient_check, load_model_for, read_model, write_model, ConvPolicy, ConvPolicyConfig, GradCheckOptions,
    GradCheckReport, Policy, TrainSample,
};
use crate::samegame::{encode_board, generate_board, replay, write_episode_log, BoardSeed, BoardSource};
use crate::training::{train_pipeline, GenerationConfig, PRESETS};

#[derive(Debug, Parser)]
#[command(name = "pmcts", version, about = "Policy-guided parallel MCTS for SameGame")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// Base RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Search threads (for `train`, threads per episode).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML config: search settings, or a training config for `train`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Trained policy network file.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output path: episode log, checkpoint directory or CSV file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play one episode and print the committed moves.
    Play(PlayArgs),
    /// Run the generation-based training pipeline.
    Train(TrainArgs),
    /// Run a benchmark grid and write one CSV row per episode.
    Bench(BenchArgs),
    /// Play the 20 standard positions once each.
    Positions(PositionsArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Quick internal consistency checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct BoardArgs {
    /// Position file to play instead of a generated board.
    #[arg(long, conflicts_with = "board_seed")]
    pub position: Option<PathBuf>,
    /// Seed of the generated board.
    #[arg(long)]
    pub board_seed: Option<u64>,
    #[arg(long, default_value_t = 15)]
    pub width: usize,
    #[arg(long, default_value_t = 15)]
    pub height: usize,
    #[arg(long, default_value_t = 5)]
    pub colors: u8,
}

#[derive(Debug, Clone, Copy, Args)]
#[group(multiple = false)]
pub struct BudgetArgs {
    /// Simulations per committed move.
    #[arg(long)]
    pub simulations: Option<u64>,
    /// Wall-clock seconds per committed move.
    #[arg(long)]
    pub seconds: Option<f64>,
}

impl BudgetArgs {
    fn budget(self) -> Option<Budget> {
        match (self.simulations, self.seconds) {
            (Some(k), _) => Some(Budget::Simulations(k)),
            (_, Some(s)) => Some(Budget::Seconds(s)),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[command(flatten)]
    pub board: BoardArgs,
    /// Defaults to plain MCTS without a model and to the config's rollout
    /// mode with one.
    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub c_puct: Option<f64>,
    /// Per-move search counters as JSON lines.
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Built-in preset, used when no --config is given.
    #[arg(long, default_value = "desk-7x7")]
    pub preset: String,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Episodes played concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 500)]
    pub boards: usize,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = Algorithm::ALL)]
    pub algorithms: Vec<Algorithm>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Benchmark every `*.txt` position in this directory instead of
    /// generated boards.
    #[arg(long)]
    pub positions: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub width: usize,
    #[arg(long, default_value_t = 15)]
    pub height: usize,
    #[arg(long, default_value_t = 5)]
    pub colors: u8,
    #[arg(long)]
    pub c_puct: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub plain_threads: usize,
    #[arg(long, default_value_t = 100)]
    pub policy_threads: usize,
    /// Episodes played concurrently within one grid cell.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct PositionsArgs {
    /// Directory holding `position-01.txt` … `position-20.txt`.
    pub dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::PlainMcts)]
    pub algorithm: Algorithm,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 5)]
    pub colors: u8,
    #[arg(long)]
    pub c_puct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NetPreset {
    Tiny,
    Reduced,
    Full,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = NetPreset::Reduced)]
    pub preset: NetPreset,
    #[arg(long, default_value_t = 7)]
    pub width: usize,
    #[arg(long, default_value_t = 7)]
    pub height: usize,
    #[arg(long, default_value_t = 5)]
    pub colors: u8,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Check a random subset of this many parameters.
    #[arg(long)]
    pub max_params: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Runs a parsed command line, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Play(a) => cmd_play(common, a, out),
        Command::Train(a) => cmd_train(common, a, out),
        Command::Bench(a) => cmd_bench(common, a, out),
        Command::Positions(a) => cmd_positions(common, a, out),
        Command::Gradcheck(a) => cmd_gradcheck(common, a, out),
        Command::Selftest => cmd_selftest(common, out),
    }
}

/// Process exit status for an error: 2 for usage errors, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

fn base_search_config(common: &Common) -> Result<SearchConfig> {
    let mut cfg = match &common.config {
        Some(p) => SearchConfig::load(p)?,
        None => SearchConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn load_policy(common: &Common, height: usize, width: usize, colors: u8) -> Result<Policy> {
    match &common.model {
        Some(p) => Ok(Policy::model(load_model_for(p, height, width, colors)?)),
        None => Ok(Policy::Uniform),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_play(common: &Common, a: &PlayArgs, out: &mut dyn Write) -> Result<()> {
    let source = match &a.board.position {
        Some(path) => BoardSource::Position {
            path: path.clone(),
            num_colors: a.board.colors,
        },
        None => BoardSource::from_seed(&BoardSeed::new(
            a.board.board_seed.unwrap_or(0),
            a.board.width,
            a.board.height,
            a.board.colors,
        )),
    };
    let board = source.load()?;
    let mut cfg = base_search_config(common)?;
    if let Some(budget) = a.budget.budget() {
        budget.validate()?;
        budget.apply(&mut cfg);
    }
    if let Some(c) = a.c_puct {
        cfg.c_puct = c;
    }
    let model = load_policy(common, board.height(), board.width(), board.num_colors())?;
    let algorithm = a.algorithm.unwrap_or(match (&model, cfg.rollout_mode) {
        (Policy::Uniform, _) => Algorithm::PlainMcts,
        (_, RolloutMode::Random) => Algorithm::PolicyMctsRandom,
        (_, RolloutMode::PolicyGuided) => Algorithm::PolicyMctsGuided,
    });
    let policy = algorithm.policy(&model)?;
    cfg.rollout_mode = algorithm.rollout_mode();

    writeln!(
        out,
        "board {}x{}, {} colors, {}",
        board.width(),
        board.height(),
        board.num_colors(),
        algorithm
    )?;
    let episode = play_episode(&board, &cfg, &policy)?;
    let record = episode.to_record(source);
    record.verify(&board)?;
    for (i, s) in episode.steps.iter().enumerate() {
        writeln!(out, "move {:>3}  {}  +{}", i + 1, s.action, s.move_score)?;
    }
    writeln!(
        out,
        "final score {} ({} moves, end adjustment {:+})",
        record.final_score,
        episode.steps.len(),
        record.terminal_adjustment
    )?;
    if let Some(path) = &common.out {
        let mut w = create(path)?;
        write_episode_log(&mut w, std::slice::from_ref(&record))?;
        w.flush()?;
    }
    if let Some(path) = &a.telemetry {
        let mut w = create(path)?;
        write_telemetry(&episode, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_train(common: &Common, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if common.model.is_some() {
        return Err(Error::Usage(
            "train starts from a fresh network and takes no --model".into(),
        ));
    }
    let mut cfg = match &common.config {
        Some(p) => GenerationConfig::load(p)?,
        None => GenerationConfig::preset(&a.preset).map_err(|_| {
            Error::Usage(format!(
                "unknown preset {:?}; expected one of {}",
                a.preset,
                PRESETS.join(", ")
            ))
        })?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads_per_run = t;
    }
    if let Some(g) = a.generations {
        cfg.generations = g;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    if a.dry_run {
        write!(out, "{}", cfg.to_toml())?;
        return Ok(());
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("checkpoints"));
    let mut printed = Ok(());
    let outcome = train_pipeline(&cfg, Some(&dir), &mut |r| {
        if printed.is_ok() {
            printed = writeln!(
                out,
                "generation {}: mean {:.1} (sd {:.1}) over {} episodes, {} samples, \
                 buffers {}/{}, {} epochs, loss {:.4}/{:.4}, {:.1} s",
                r.generation,
                r.mean_score,
                r.std_score,
                r.episodes,
                r.samples,
                r.training_size,
                r.validation_size,
                r.epochs,
                r.train_loss,
                r.validation_loss,
                r.wall_time_ms / 1e3
            );
        }
    })?;
    printed?;
    if outcome.resumed > 0 {
        writeln!(out, "resumed after generation {}", outcome.resumed)?;
    }
    writeln!(out, "checkpoints in {}", dir.display())?;
    Ok(())
}

fn cmd_bench(common: &Common, a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let budget = a
        .budget
        .budget()
        .ok_or_else(|| Error::Usage("bench needs --simulations or --seconds".into()))?;
    let boards = match &a.positions {
        Some(dir) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            paths.retain(|p| p.extension().is_some_and(|x| x == "txt"));
            paths.sort();
            if paths.is_empty() {
                return Err(Error::Usage(format!("no .txt positions in {}", dir.display())));
            }
            BoardSet::Files {
                paths,
                colors: a.colors,
            }
        }
        None => BoardSet::Seeded {
            count: a.boards,
            width: a.width,
            height: a.height,
            colors: a.colors,
        },
    };
    let mut search = base_search_config(common)?;
    if let Some(c) = a.c_puct {
        search.c_puct = c;
    }
    let spec = BenchmarkSpec {
        boards,
        runs: a.runs,
        algorithms: a.algorithms.clone(),
        budget,
        plain_threads: common.threads.unwrap_or(a.plain_threads),
        policy_threads: common.threads.unwrap_or(a.policy_threads),
        seed: common.seed.unwrap_or(0),
        search,
        workers: a.workers,
    };
    spec.validate()?;
    let first = spec.board_source(0).load()?;
    let model = load_policy(common, first.height(), first.width(), first.num_colors())?;
    let rows = run_benchmark(&spec, &model, &mut |_| {})?;
    let summary = format_summary(&summarize(&rows));
    match &common.out {
        Some(path) => {
            let mut w = create(path)?;
            write_csv(&rows, &mut w)?;
            w.flush()?;
            write!(out, "{summary}")?;
            writeln!(out, "{} rows written to {}", rows.len(), path.display())?;
        }
        None => {
            write_csv(&rows, &mut *out)?;
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn cmd_positions(common: &Common, a: &PositionsArgs, out: &mut dyn Write) -> Result<()> {
    let budget = a
        .budget
        .budget()
        .ok_or_else(|| Error::Usage("positions needs --simulations or --seconds".into()))?;
    budget.validate()?;
    let mut search = match &common.config {
        Some(p) => SearchConfig::load(p)?,
        None => position_search_config(a.algorithm),
    };
    if let Some(s) = common.seed {
        search.seed = s;
    }
    if let Some(t) = common.threads {
        search.threads = t;
    }
    if let Some(c) = a.c_puct {
        search.c_puct = c;
    }
    let model = match &common.model {
        Some(p) => {
            let net = crate::policy::load_model(p)?;
            let c = net.config();
            if c.colors != a.colors {
                return Err(Error::Config(format!(
                    "model expects {} colors, positions have {}",
                    c.colors, a.colors
                )));
            }
            Policy::model(net)
        }
        None => Policy::Uniform,
    };
    let results = run_positions(&a.dir, a.colors, a.algorithm, budget, &search, &model, &mut |_| {})?;
    write!(out, "{}", format_positions_report(a.algorithm, &results))?;
    if let Some(path) = &common.out {
        let mut w = create(path)?;
        let records: Vec<_> = results.iter().map(|r| r.record.clone()).collect();
        write_episode_log(&mut w, &records)?;
        w.flush()?;
    }
    Ok(())
}

/// `n` random boards, each paired with a random legal target.
pub fn gradcheck_batch(height: usize, width: usize, colors: u8, n: usize, seed: u64) -> Result<Vec<TrainSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let b = generate_board(&BoardSeed::new(rng.random(), width, height, colors))?;
        let legal = b.legal_actions();
        if legal.is_empty() {
            continue;
        }
        let a = legal[rng.random_range(0..legal.len())];
        out.push(TrainSample::new(encode_board(&b), b.action_index(a)));
    }
    Ok(out)
}

fn print_gradcheck(out: &mut dyn Write, params: usize, r: &GradCheckReport) -> Result<()> {
    writeln!(
        out,
        "checked {} of {} parameters: max relative error {:.3e} (tolerance {:.0e}), \
         max absolute error {:.3e}, {} settled by the absolute floor, {} failures",
        r.checked, params, r.max_relative_error, r.tolerance, r.max_absolute_error, r.absolute_passes, r.failures
    )?;
    Ok(())
}

fn cmd_gradcheck(common: &Common, a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let seed = common.seed.unwrap_or(0);
    let net = match &common.model {
        Some(p) => crate::policy::load_model(p)?,
        None => {
            let cfg = match a.preset {
                NetPreset::Tiny => ConvPolicyConfig::tiny(a.height, a.width, a.colors, seed),
                NetPreset::Reduced => ConvPolicyConfig::desk(a.height, a.width, a.colors, seed),
                NetPreset::Full => ConvPolicyConfig::full(a.height, a.width, a.colors, seed),
            };
            ConvPolicy::new(cfg)?
        }
    };
    let c = net.config().clone();
    let batch = gradcheck_batch(c.height, c.width, c.colors, a.samples.max(1), seed)?;
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        max_params: a.max_params,
        seed,
        ..GradCheckOptions::default()
    };
    let report = gradient_check(&net, &batch, &opts)?;
    print_gradcheck(out, net.num_params(), &report)?;
    if !report.passed() {
        return Err(Error::Check(format!(
            "{} gradient entries out of tolerance",
            report.failures
        )));
    }
    Ok(())
}

fn cmd_selftest(common: &Common, out: &mut dyn Write) -> Result<()> {
    let seed = common.seed.unwrap_or(0);
    let checks: [(&str, fn(u64) -> Result<()>); 5] = [
        ("board generation and replay", selftest_engine),
        ("single-threaded search accounting", |s| selftest_search(s, 1)),
        ("multi-threaded search accounting", |s| selftest_search(s, 4)),
        ("network gradients", selftest_gradients),
        ("model file round trip", selftest_model_io),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        match check(seed) {
            Ok(()) => writeln!(out, "ok    {name}")?,
            Err(e) => {
                writeln!(out, "FAIL  {name}: {e}")?;
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Check(failed.join(", ")))
    }
}

fn selftest_engine(seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..50 {
        let bs = BoardSeed::new(seed.wrapping_add(i), 6, 6, 3);
        let b = generate_board(&bs)?;
        if generate_board(&bs)? != b {
            return Err(Error::Check("board generation is not deterministic".into()));
        }
        let mut cur = b.clone();
        let mut actions = Vec::new();
        let mut total = 0;
        while !cur.is_terminal() {
            let legal = cur.legal_actions();
            let a = legal[rng.random_range(0..legal.len())];
            let o = cur.apply_action(a)?;
            total += o.reward();
            actions.push(a);
            cur = o.next_board;
        }
        if actions.is_empty() {
            total = b.terminal_adjustment();
        }
        if replay(&b, &actions)?.total != total {
            return Err(Error::Check("replay total differs from played total".into()));
        }
    }
    Ok(())
}

fn selftest_search(seed: u64, threads: usize) -> Result<()> {
    let b = generate_board(&BoardSeed::new(seed, 6, 6, 4))?;
    if b.is_terminal() {
        return Ok(());
    }
    let cfg = SearchConfig {
        simulations: 500,
        threads,
        seed,
        ..SearchConfig::default()
    };
    let r = search(&b, &cfg, &Policy::Uniform)?;
    let visits: u64 = r.root_edges.iter().map(|e| e.stats.n as u64).sum();
    let in_flight: u64 = r.root_edges.iter().map(|e| e.stats.w as u64).sum();
    if visits != r.simulations || r.simulations != 500 {
        return Err(Error::Check(format!(
            "root visits {visits} for {} simulations",
            r.simulations
        )));
    }
    if in_flight != 0 || r.audit.in_flight != 0 || r.audit.conservation_violations != 0 {
        return Err(Error::Check("virtual loss left in the tree".into()));
    }
    Ok(())
}

fn selftest_gradients(seed: u64) -> Result<()> {
    let net = ConvPolicy::new(ConvPolicyConfig::tiny(5, 5, 3, seed))?;
    let batch = gradcheck_batch(5, 5, 3, 6, seed)?;
    let r = gradient_check(&net, &batch, &GradCheckOptions::default())?;
    if !r.passed() {
        return Err(Error::Check(format!("max relative error {:.3e}", r.max_relative_error)));
    }
    Ok(())
}

fn selftest_model_io(seed: u64) -> Result<()> {
    let net = ConvPolicy::new(ConvPolicyConfig::tiny(5, 5, 3, seed))?;
    let mut bytes = Vec::new();
    write_model(&net, &mut bytes)?;
    let back = read_model(bytes.as_slice())?;
    if back.params() != net.params() || back.config() != net.config() {
        return Err(Error::Check("model differs after round trip".into()));
    }
    Ok(())
}
