use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use sortline::agent::{Algorithm, PolicySnapshot};
use sortline::env::{encoding_order, block_width, Environment, RewardVariant, SortingEnv, OBSERVATION_LEN};
use sortline::factory::{build_factory, FactoryTopology, ACTION_COUNT};
use sortline::harness::{
    compare, evaluate_policy, load_config, run_training, seed_dir, CellKey, HarnessError, RunConfig,
    SMOOTHING_WINDOW,
};

#[derive(Parser)]
#[command(name = "sortline", version, about = "Train and compare DQN/PPO agents on the sorting line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write run directories.
    Train(Common),
    /// Evaluate a stored policy with greedy actions.
    Eval(EvalArgs),
    /// Aggregate completed runs into plot data and a summary.
    Compare(CompareArgs),
    /// Print the factory net and the observation layout.
    Describe(Common),
    /// Check a configuration and the net it builds.
    Validate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long, env = "SORTLINE_CONFIG")]
    config: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, env = "SORTLINE_SEEDS", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, env = "SORTLINE_EPISODES")]
    episodes: Option<usize>,
    #[arg(long, env = "SORTLINE_ALGO")]
    algo: Option<Algorithm>,
    #[arg(long, env = "SORTLINE_REWARD")]
    reward: Option<RewardVariant>,
    /// Root directory of run outputs.
    #[arg(long, env = "SORTLINE_OUT", default_value = "runs")]
    out: PathBuf,
    /// Seeds trained concurrently.
    #[arg(long, env = "SORTLINE_PARALLEL", default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Policy file; defaults to each seed's best.json under --out.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluation episodes (defaults to the configured final-eval count).
    #[arg(long = "eval-episodes")]
    eval_episodes: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory for plot data (defaults to <out>/report).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = SMOOTHING_WINDOW)]
    window: usize,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut c = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        }
        if let Some(e) = self.episodes {
            c.episodes = e;
        }
        if let Some(a) = self.algo {
            c.algo = a;
        }
        if let Some(r) = self.reward {
            c.reward = r;
        }
        Ok(c)
    }
}

fn train(args: &Common) -> Result<(), HarnessError> {
    let config = args.resolve()?;
    let runs = run_training(&config, &args.out, args.parallel)?;
    for r in runs {
        let status = if r.resumed { "already complete" } else { "trained" };
        println!("seed {:>3}: {status}  {}", r.seed, r.dir.display());
    }
    Ok(())
}

fn make_env(config: &RunConfig, topo: FactoryTopology) -> SortingEnv {
    SortingEnv::new(Arc::new(topo), config.reward)
        .with_products(config.n_products)
        .expect("product count validated")
}

fn read_policy(path: &Path) -> Result<PolicySnapshot, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(PolicySnapshot::from_json(&text, OBSERVATION_LEN, ACTION_COUNT)?)
}

fn eval(args: &EvalArgs) -> Result<(), HarnessError> {
    let config = args.common.resolve()?;
    let topo = config.validate()?;
    let mut env = make_env(&config, topo);
    let n = args.eval_episodes.unwrap_or(config.final_eval_episodes);
    let targets: Vec<(u64, PathBuf)> = match &args.checkpoint {
        Some(p) => vec![(config.seeds[0], p.clone())],
        None => config
            .seeds
            .iter()
            .map(|&s| (s, seed_dir(&args.common.out, config.algo, config.reward, s).join("best.json")))
            .collect(),
    };
    let mut missing = Vec::new();
    for (seed, path) in targets {
        if !path.is_file() {
            missing.push(path.display().to_string());
            continue;
        }
        let policy = read_policy(&path)?;
        let m = evaluate_policy(&policy, &mut env, n, seed, config.max_steps)?;
        let len = m.len_mean.map_or("-".to_string(), |l| format!("{l:.2}"));
        println!(
            "{}  seed {seed}: success {:.1}%  correct {:.1}%  mean length {len}",
            path.display(),
            m.success_pct,
            m.correct_pct
        );
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::MissingRun(missing))
    }
}

fn run_compare(args: &CompareArgs) -> Result<(), HarnessError> {
    let c = &args.common;
    let config = c.resolve()?;
    let cells: Vec<CellKey> = CellKey::all()
        .into_iter()
        .filter(|k| c.algo.is_none_or(|a| a == k.algo) && c.reward.is_none_or(|r| r == k.reward))
        .collect();
    let seeds = (c.seeds.is_some() || c.config.is_some()).then_some(config.seeds.as_slice());
    let report_dir = args.report.clone().unwrap_or_else(|| c.out.join("report"));
    if args.window == 0 {
        return Err(HarnessError::Config("window must be positive".into()));
    }
    let report = compare(&c.out, &cells, seeds, args.window, &report_dir)?;
    println!(
        "{:<8} {:>5} {:>14} {:>14} {:>12}",
        "cell", "seeds", "success %", "correct %", "length"
    );
    for cell in &report.cells {
        let len = cell.len_mean.map_or("-".to_string(), |l| format!("{l:.2}"));
        println!(
            "{:<8} {:>5} {:>7.1} ± {:<5.1} {:>7.1} ± {:<5.1} {:>12}{}",
            cell.cell,
            cell.seeds.len(),
            cell.success_mean,
            cell.success_std,
            cell.correct_mean,
            cell.correct_std,
            len,
            if cell.single_seed { "  (single seed)" } else { "" }
        );
    }
    println!("plot data written to {}", report_dir.display());
    Ok(())
}

fn describe(args: &Common) -> Result<(), HarnessError> {
    let config = args.resolve()?;
    let topo = build_factory(&config.factory).map_err(|e| HarnessError::Config(e.to_string()))?;
    let net = &topo.net;
    println!("places ({}):", net.place_count());
    for (i, p) in net.places.iter().enumerate() {
        let cap = p.capacity.map_or("inf".to_string(), |c| c.to_string());
        println!("  {i:>2} {:<30} {:<14} capacity {cap}", p.name, format!("{:?}", p.class));
    }
    println!("transitions ({}):", net.transition_count());
    for (t, tr) in net.transitions.iter().enumerate() {
        let arcs = |f: &dyn Fn(usize) -> u32| {
            (0..net.place_count())
                .filter(|&p| f(p) > 0 && p != net.hidden_place(t))
                .map(|p| net.places[p].name.clone())
                .collect::<Vec<_>>()
                .join(" + ")
        };
        println!(
            "  {t:>2} {:<24} {} -> {}  ({} ticks)",
            tr.name,
            arcs(&|p| net.pre(p, t)),
            arcs(&|p| net.post(p, t)),
            net.duration(t)
        );
    }
    let c = topo.census();
    println!(
        "observation: {} components ({} resource, {} storage, {} regular, {} short, {} hidden places)",
        OBSERVATION_LEN, c.resource, c.storage, c.regular, c.regular_short, c.hidden
    );
    let widths: Vec<String> = encoding_order(&topo)
        .into_iter()
        .map(|p| block_width(net.places[p].class).to_string())
        .collect();
    println!("block widths: {}", widths.join(" "));
    let env = make_env(&config, topo.clone());
    println!("actions: {} (the last one does nothing)", env.action_count());
    Ok(())
}

fn validate(args: &Common) -> Result<(), HarnessError> {
    let config = args.resolve()?;
    config.validate()?;
    println!(
        "ok: {} on {} with {} seed(s), {} episodes",
        config.algo,
        config.reward,
        config.seeds.len(),
        config.episodes
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => run_compare(a),
        Command::Describe(a) => describe(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::Config(_) => 2,
                HarnessError::MissingRun(_) => 3,
                _ => 1,
            })
        }
    }
}
