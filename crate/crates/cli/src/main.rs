//! `ral`: run, compare and inspect reinforced batch active-learning experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use ral_core::backends::{ClusterConfig, CoverageConfig, World, WorldSpec};
use ral_core::experiment::{
    compare_strategies, curves_from_csv, curves_to_csv, emit_curve_svg, initial_state, run_al_experiment, run_dir,
    ExperimentConfig,
};
use ral_core::lut::{build_lut, LookupTable, ThresholdMode};
use ral_core::pool::{ALCycleState, SamplePool, SelectionBatch};
use ral_core::reward::BaselineMode;
use ral_core::seed;
use ral_core::strategies::StrategyKind;

#[derive(Parser)]
#[command(name = "ral", version, about = "Reinforced batch active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (strategy, seed) cell and write its artifacts.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        strategy: StrategyKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the strategy x seed matrix and write curves.csv and summary.csv.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Build a lookup table for the cycle-0 state of a seed's world.
    BuildLut {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Labeled ids to use instead of the seed's initial draw.
        #[arg(long, value_delimiter = ',')]
        labeled: Option<Vec<usize>>,
        /// Output JSONL file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a batch's performance from a saved lookup table.
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        labeled: Option<Vec<usize>>,
        #[arg(long)]
        lut: PathBuf,
        /// Comma-separated batch ids.
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<usize>,
        /// Write the table back, including any fallback entry.
        #[arg(long)]
        update: bool,
    },
    /// Render a curves CSV as an SVG plot.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Flags mirror `ExperimentConfig`; any flag given overrides the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cluster | coverage (resets backend parameters to that kind's defaults).
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    per_cluster: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    /// Coverage pool size.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategyKind>>,
    #[arg(long)]
    initial_labeled: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    rl_iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    baseline_mode: Option<BaselineMode>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    lut_size: Option<usize>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    weight_eps: Option<f64>,
    #[arg(long)]
    threshold_mode: Option<ThresholdMode>,
    /// Reward the agent with direct oracle calls instead of the lookup table.
    #[arg(long)]
    no_lut: bool,
    #[arg(long)]
    warm_start: bool,
    /// Comma-separated seeds, or a range such as `0..5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {s:?}");
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().with_context(|| format!("bad seed {x:?}"))).collect()
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        match self.backend.as_deref() {
            None => {}
            Some("cluster") if matches!(c.backend, WorldSpec::Cluster(_)) => {}
            Some("coverage") if matches!(c.backend, WorldSpec::Coverage(_)) => {}
            Some("cluster") => {
                c.backend = ExperimentConfig::default().backend;
            }
            Some("coverage") => {
                c.backend = WorldSpec::Coverage(CoverageConfig { size: 200, dim: 2, radius: 0.2, seed: 0 });
                c.strategies.retain(|&s| s != StrategyKind::Entropy);
            }
            Some(other) => bail!("unknown backend {other:?} (expected cluster | coverage)"),
        }
        match &mut c.backend {
            WorldSpec::Cluster(ClusterConfig { clusters, per_cluster, dim, spread, .. }) => {
                if self.size.is_some() || self.radius.is_some() {
                    bail!("--size and --radius apply to the coverage backend");
                }
                set(clusters, self.clusters);
                set(per_cluster, self.per_cluster);
                set(dim, self.dim);
                set(spread, self.spread);
            }
            WorldSpec::Coverage(CoverageConfig { size, dim, radius, .. }) => {
                if self.clusters.is_some() || self.per_cluster.is_some() || self.spread.is_some() {
                    bail!("--clusters, --per-cluster and --spread apply to the cluster backend");
                }
                set(size, self.size);
                set(dim, self.dim);
                set(radius, self.radius);
            }
        }
        set(&mut c.noise, self.noise);
        if self.no_standardize {
            c.standardize = false;
        }
        set(&mut c.strategies, self.strategies.clone());
        set(&mut c.initial_labeled, self.initial_labeled);
        set(&mut c.budget, self.budget);
        set(&mut c.cycles, self.cycles);
        set(&mut c.rl_iterations, self.rl_iterations);
        set(&mut c.lr, self.lr);
        set(&mut c.lambda, self.lambda);
        set(&mut c.baseline_mode, self.baseline_mode);
        set(&mut c.clip_norm, self.clip_norm);
        set(&mut c.lut_size, self.lut_size);
        set(&mut c.neighbors, self.neighbors);
        set(&mut c.weight_eps, self.weight_eps);
        set(&mut c.threshold_mode, self.threshold_mode);
        if self.no_lut {
            c.use_lut = false;
        }
        if self.warm_start {
            c.warm_start = true;
        }
        if let Some(s) = &self.seeds {
            c.seeds = parse_seeds(s)?;
        }
        if let Some(dir) = &self.output_dir {
            c.output_dir = Some(dir.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Failure while assembling the configuration: exit code 1.
#[derive(Debug)]
struct ConfigFailure(anyhow::Error);

fn config(args: &ConfigArgs) -> anyhow::Result<ExperimentConfig> {
    args.resolve().map_err(|e| anyhow!(ConfigFailure(e)))
}

impl std::fmt::Display for ConfigFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigFailure {}

/// Cycle-0 state of `seed`'s world, optionally with a different labeled set.
fn lut_state(cfg: &ExperimentConfig, seed: u64, labeled: &Option<Vec<usize>>) -> anyhow::Result<(World, ALCycleState)> {
    let (_, world, state) = initial_state(cfg, seed)?;
    let state = match labeled {
        None => state,
        Some(ids) => ALCycleState::new(SamplePool::new(state.pool.features().to_vec())?.label(ids)?),
    };
    Ok((world, state))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { cfg, strategy, seed } => {
            let mut config = config(&cfg)?;
            config.strategies = vec![strategy];
            config.seeds = vec![seed];
            let result = run_al_experiment(&config, strategy, seed)?;
            if let Some(root) = &config.output_dir {
                let dir = run_dir(root, strategy, seed);
                result.write_artifacts(&config, &dir)?;
                eprintln!("artifacts written to {}", dir.display());
            }
            print!("{}", curves_to_csv(&result.curve));
        }
        Command::Compare { cfg } => {
            let config = config(&cfg)?;
            let rows = compare_strategies(&config)?;
            match &config.output_dir {
                Some(root) => eprintln!("{} curve rows written to {}", rows.len(), root.join("curves.csv").display()),
                None => print!("{}", curves_to_csv(&rows)),
            }
        }
        Command::BuildLut { cfg, seed, labeled, out } => {
            let config = config(&cfg)?;
            let (world, state) = lut_state(&config, seed, &labeled)?;
            let oracle = world.with_noise(config.noise);
            let mut rng = seed::rng(seed, &[seed::tag("build-lut")]);
            let table = build_lut(&state, &oracle, config.lut_size, config.budget, config.threshold_mode, &mut rng)?;
            table.save(&out)?;
            eprintln!("{} entries (budget {}) written to {}", table.len(), table.budget, out.display());
        }
        Command::Estimate { cfg, seed, labeled, lut, ids, update } => {
            let config = config(&cfg)?;
            let (world, state) = lut_state(&config, seed, &labeled)?;
            let oracle = world.with_noise(config.noise);
            let mut table = LookupTable::load(&lut)?;
            let batch = SelectionBatch::for_pool(ids, &state.pool)?;
            let r = table.estimate_performance(&batch, &state.pool, config.neighbors, config.weight_eps, &oracle)?;
            println!("{}", serde_json::to_string(&r)?);
            if update {
                table.save(&lut)?;
            }
        }
        Command::Plot { input, output } => plot(&input, &output)?,
    }
    Ok(())
}

fn plot(input: &Path, output: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let rows = curves_from_csv(&text).with_context(|| format!("parsing {}", input.display()))?;
    let svg = emit_curve_svg(&rows)?;
    fs::write(output, svg).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigFailure>().is_some() {
        return 1;
    }
    match e.chain().find_map(|c| c.downcast_ref::<ral_core::Error>()) {
        Some(err) if err.is_config() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
