//! Experiment orchestration: the full active-learning loop for any
//! strategy, the strategy × seed comparison matrix, and curve artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{score_pool, select_top_b, AdamConfig, AgentCheckpoint, AgentParams};
use crate::backends::{ClusterConfig, World, WorldSpec};
use crate::error::{Error, Result};
use crate::lut::{build_lut, LookupTable, ThresholdMode, DEFAULT_NEIGHBORS, DEFAULT_WEIGHT_EPS};
use crate::oracle::PerformanceOracle;
use crate::pool::{standardize_features, ALCycleState, SelectionBatch};
use crate::reward::{
    rl_iteration, BaselineMode, DirectEstimator, IterationRecord, LutEstimator, RewardState, RlConfig,
};
use crate::seed;
use crate::strategies::{entropy_select, kcenter_greedy, random_select, StrategyKind};

pub const CURVE_HEADER: &str = "strategy,seed,cycle,labeled,performance";

/// Everything needed to reproduce a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub backend: WorldSpec,
    /// Standard deviation of additive Gaussian oracle noise.
    pub noise: f64,
    pub standardize: bool,
    pub strategies: Vec<StrategyKind>,
    pub initial_labeled: usize,
    pub budget: usize,
    pub cycles: usize,
    pub rl_iterations: usize,
    pub lr: f64,
    pub lambda: f64,
    pub baseline_mode: BaselineMode,
    pub clip_norm: f64,
    pub lut_size: usize,
    pub neighbors: usize,
    pub weight_eps: f64,
    pub threshold_mode: ThresholdMode,
    /// Estimate rewards with the lookup table; otherwise call the oracle directly.
    pub use_lut: bool,
    pub warm_start: bool,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            backend: WorldSpec::Cluster(ClusterConfig { clusters: 10, per_cluster: 20, dim: 8, spread: 0.4, seed: 0 }),
            noise: 0.0,
            standardize: true,
            strategies: StrategyKind::ALL.to_vec(),
            initial_labeled: 10,
            budget: 10,
            cycles: 5,
            rl_iterations: 150,
            lr: AdamConfig::default().lr,
            lambda: 0.5,
            baseline_mode: BaselineMode::AsWritten,
            clip_norm: 5.0,
            lut_size: 60,
            neighbors: DEFAULT_NEIGHBORS,
            weight_eps: DEFAULT_WEIGHT_EPS,
            threshold_mode: ThresholdMode::PerQuery,
            use_lut: true,
            warm_start: false,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    // Negated comparisons so NaN fails validation.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let n = self.backend.pool_size();
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if self.initial_labeled + self.budget * self.cycles > n {
            return bad(format!(
                "initial {} + budget {} x cycles {} exceeds the pool of {n}",
                self.initial_labeled, self.budget, self.cycles
            ));
        }
        if self.strategies.is_empty() {
            return bad("no strategies given".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        if self.strategies.contains(&StrategyKind::Entropy) && self.initial_labeled == 0 {
            return bad("entropy needs at least one initially labeled sample".into());
        }
        if self.strategies.contains(&StrategyKind::Mgral) {
            if self.rl_iterations == 0 {
                return bad("rl_iterations must be positive".into());
            }
            if self.use_lut && self.lut_size < 2 {
                return bad(format!("lut_size must be at least 2, got {}", self.lut_size));
            }
            if self.neighbors == 0 {
                return bad("neighbors must be positive".into());
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(self.weight_eps > 0.0) {
            return bad(format!("weight_eps must be positive, got {}", self.weight_eps));
        }
        Ok(())
    }

    pub fn rl(&self) -> RlConfig {
        RlConfig {
            budget: self.budget,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            clip_norm: self.clip_norm,
        }
    }

    /// World recipe for one experiment seed.
    pub fn world_for(&self, seed: u64) -> WorldSpec {
        self.backend.with_seed(seed::derive(seed, &[seed::tag("world")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One row of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: String,
    pub seed: u64,
    pub cycle: usize,
    pub labeled: usize,
    pub performance: f64,
}

/// Artifacts of one (strategy, seed) cell.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub world: WorldSpec,
    pub curve: Vec<CurveRow>,
    /// Per-cycle RL iteration logs (agent strategy only).
    pub iterations: Vec<Vec<IterationRecord>>,
    /// Per-cycle lookup tables, including fallback entries (agent strategy only).
    pub tables: Vec<LookupTable>,
    pub checkpoint: Option<AgentCheckpoint>,
}

struct AgentCycle {
    batch: SelectionBatch,
    agent: AgentParams,
    records: Vec<IterationRecord>,
    table: Option<LookupTable>,
    checkpoint: AgentCheckpoint,
}

fn agent_cycle<O: PerformanceOracle + ?Sized>(
    config: &ExperimentConfig,
    state: &ALCycleState,
    oracle: &O,
    warm: Option<AgentParams>,
    rng: &mut seed::Rng,
) -> Result<AgentCycle> {
    let mut agent = match warm {
        Some(a) => a,
        None => AgentParams::init(state.pool.dim(), rng),
    };
    let rl = config.rl();
    let mut reward = RewardState::new(config.lambda, config.baseline_mode)?;
    let mut records = Vec::with_capacity(config.rl_iterations);
    let mut table = if config.use_lut {
        Some(build_lut(state, oracle, config.lut_size, config.budget, config.threshold_mode, rng)?)
    } else {
        None
    };
    {
        let direct_seed: u64 = rng.random();
        let mut lut_est;
        let mut direct_est;
        let estimator: &mut dyn crate::reward::PerformanceEstimator = match table.as_mut() {
            Some(t) => {
                lut_est = LutEstimator { table: t, oracle, neighbors: config.neighbors, weight_eps: config.weight_eps };
                &mut lut_est
            }
            None => {
                direct_est = DirectEstimator { oracle, seed: direct_seed };
                &mut direct_est
            }
        };
        for i in 0..config.rl_iterations {
            let (a, r, rec) = rl_iteration(i, &agent, state, &reward, estimator, &rl, rng)?;
            agent = a;
            reward = r;
            records.push(rec);
        }
    }
    let mut order = state.pool.unlabeled();
    order.shuffle(rng);
    let (logits, _) = score_pool(&agent, &state.pool, &order)?;
    let batch = select_top_b(&order, &logits, config.budget)?;
    let checkpoint = AgentCheckpoint::new(&agent, rng);
    Ok(AgentCycle { batch, agent, records, table, checkpoint })
}

/// The world of `seed` and its cycle-0 state: features (standardized if
/// configured) with `initial_labeled` ids drawn from the seed's own stream.
/// Identical for every strategy.
pub fn initial_state(config: &ExperimentConfig, seed: u64) -> Result<(WorldSpec, World, ALCycleState)> {
    let world_spec = config.world_for(seed);
    let world = world_spec.generate()?;
    let mut pool = world.pool().clone();
    if config.standardize {
        pool = standardize_features(&pool)?;
    }
    let mut init_rng = seed::rng(seed, &[seed::tag("initial")]);
    let all: Vec<usize> = (0..pool.len()).collect();
    let initial: Vec<usize> = all.choose_multiple(&mut init_rng, config.initial_labeled).copied().collect();
    let state = ALCycleState::new(pool.label(&initial)?);
    Ok((world_spec, world, state))
}

/// Runs `config.cycles` active-learning cycles of `strategy` on the world of
/// `seed`. Curve points are oracle values of the actually labeled set.
pub fn run_al_experiment(config: &ExperimentConfig, strategy: StrategyKind, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let (world_spec, world, mut state) = initial_state(config, seed)?;
    let oracle = world.with_noise(config.noise);

    let curve_seed = |t: usize| seed::derive(seed, &[seed::tag("curve"), t as u64]);
    let point = |state: &ALCycleState| -> Result<CurveRow> {
        let performance = oracle.evaluate(&state.pool, &SelectionBatch::empty(), curve_seed(state.cycle))?;
        Ok(CurveRow {
            strategy: strategy.name().to_string(),
            seed,
            cycle: state.cycle,
            labeled: state.pool.labeled().len(),
            performance,
        })
    };

    let mut curve = vec![point(&state)?];
    let mut iterations = Vec::new();
    let mut tables = Vec::new();
    let mut checkpoint = None;
    let mut carried: Option<AgentParams> = None;

    for t in 0..config.cycles {
        let mut rng = seed::rng(seed, &[seed::tag(strategy.name()), t as u64]);
        let batch = match strategy {
            StrategyKind::Random => random_select(&state, config.budget, &mut rng)?,
            StrategyKind::Entropy => {
                let probe =
                    world.probe().ok_or_else(|| Error::Config("entropy needs a classification backend".into()))?;
                entropy_select(&state, config.budget, probe)?
            }
            StrategyKind::Coreset => kcenter_greedy(&state, config.budget)?,
            StrategyKind::Mgral => {
                let warm = if config.warm_start { carried.take() } else { None };
                let cycle = agent_cycle(config, &state, &oracle, warm, &mut rng)?;
                if let Some(last) = cycle.records.last() {
                    info!(
                        "seed {seed} cycle {t}: {} RL iterations, last perf {:.4}",
                        cycle.records.len(),
                        last.performance
                    );
                }
                iterations.push(cycle.records);
                tables.extend(cycle.table);
                checkpoint = Some(cycle.checkpoint);
                carried = Some(cycle.agent);
                cycle.batch
            }
        };
        state = state.apply_selection(&batch)?;
        let row = point(&state)?;
        state.history.push(crate::pool::CurvePoint {
            cycle: row.cycle,
            labeled: row.labeled,
            performance: row.performance,
        });
        curve.push(row);
    }
    Ok(RunResult { strategy, seed, world: world_spec, curve, iterations, tables, checkpoint })
}

impl RunResult {
    /// Writes config, world, per-cycle tables and iteration logs, the final
    /// agent checkpoint, and the curve into `dir`.
    pub fn write_artifacts(&self, config: &ExperimentConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        config.save(&dir.join("config.json"))?;
        self.world.save(&dir.join("world.json"))?;
        for (t, table) in self.tables.iter().enumerate() {
            table.save(&dir.join(format!("lut-cycle-{t}.jsonl")))?;
        }
        if self.strategy == StrategyKind::Mgral {
            let mut log = Vec::new();
            for (t, records) in self.iterations.iter().enumerate() {
                for r in records {
                    let mut v = serde_json::to_value(r)?;
                    v["cycle"] = t.into();
                    writeln!(log, "{}", serde_json::to_string(&v)?)?;
                }
            }
            fs::write(dir.join("iterations.jsonl"), log)?;
        }
        if let Some(ck) = &self.checkpoint {
            ck.save(&dir.join("agent.json"))?;
        }
        fs::write(dir.join("curve.csv"), curves_to_csv(&self.curve))?;
        Ok(())
    }
}

pub fn run_dir(root: &Path, strategy: StrategyKind, seed: u64) -> PathBuf {
    root.join(strategy.name()).join(format!("seed-{seed}"))
}

/// Runs every (strategy, seed) cell, optionally writing artifacts under
/// `config.output_dir`, and returns all curve rows sorted by
/// (strategy, seed, cycle).
pub fn compare_strategies(config: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    config.validate()?;
    let cells: Vec<(StrategyKind, u64)> =
        config.strategies.iter().flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed))).collect();
    let outcomes: Vec<((StrategyKind, u64), Result<RunResult>)> =
        cells.par_iter().map(|&(s, seed)| ((s, seed), run_al_experiment(config, s, seed))).collect();

    let completed: Vec<(String, u64)> =
        outcomes.iter().filter(|(_, r)| r.is_ok()).map(|((s, seed), _)| (s.name().to_string(), *seed)).collect();
    let mut results = Vec::with_capacity(outcomes.len());
    for ((s, seed), r) in outcomes {
        match r {
            Ok(r) => results.push(r),
            Err(e) => {
                return Err(Error::MatrixAborted {
                    strategy: s.name().to_string(),
                    seed,
                    completed,
                    source: Box::new(e),
                })
            }
        }
    }

    if let Some(root) = &config.output_dir {
        for r in &results {
            r.write_artifacts(config, &run_dir(root, r.strategy, r.seed))?;
        }
    }
    let mut rows: Vec<CurveRow> = results.into_iter().flat_map(|r| r.curve).collect();
    rows.sort_by(|a, b| (a.strategy.as_str(), a.seed, a.cycle).cmp(&(b.strategy.as_str(), b.seed, b.cycle)));
    if let Some(root) = &config.output_dir {
        fs::create_dir_all(root)?;
        fs::write(root.join("curves.csv"), curves_to_csv(&rows))?;
        fs::write(root.join("summary.csv"), summary_to_csv(&summarize(&rows)))?;
    }
    Ok(rows)
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.strategy, r.seed, r.cycle, r.labeled, format_real(r.performance)));
    }
    out
}

/// Parses a curve CSV. Rejects a missing header, malformed rows, and a body
/// with no rows.
pub fn curves_from_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>().join(",") != CURVE_HEADER {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{CURVE_HEADER}`") });
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize::<CurveRow>() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                return Err(Error::Parse { line, msg: e.to_string() });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub cycle: usize,
    pub labeled: f64,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Mean and population standard deviation over seeds per (strategy, cycle).
pub fn summarize(rows: &[CurveRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, usize), Vec<&CurveRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.strategy.as_str(), r.cycle)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((strategy, cycle), g)| {
            let n = g.len() as f64;
            let mean = g.iter().map(|r| r.performance).sum::<f64>() / n;
            let var = g.iter().map(|r| (r.performance - mean).powi(2)).sum::<f64>() / n;
            SummaryRow {
                strategy: strategy.to_string(),
                cycle,
                labeled: g.iter().map(|r| r.labeled as f64).sum::<f64>() / n,
                mean,
                std: var.sqrt(),
                seeds: g.len(),
            }
        })
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("strategy,cycle,labeled,mean,std,seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.strategy,
            r.cycle,
            format_real(r.labeled),
            format_real(r.mean),
            format_real(r.std),
            r.seeds
        ));
    }
    out
}

/// Trapezoidal area under a (labeled, performance) curve.
pub fn area_under_curve(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Renders seed-averaged curves, one polyline per strategy.
pub fn emit_curve_svg(rows: &[CurveRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    let summary = summarize(rows);
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &summary {
        series.entry(s.strategy.as_str()).or_default().push((s.labeled, s.mean));
    }

    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let xs = summary.iter().map(|s| s.labeled);
    let x_min = xs.clone().fold(f64::INFINITY, f64::min);
    let mut x_max = xs.fold(f64::NEG_INFINITY, f64::max);
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let ys = summary.iter().map(|s| s.mean);
    let y_min = (ys.clone().fold(f64::INFINITY, f64::min) * 10.0).floor() / 10.0;
    let mut y_max = (ys.fold(f64::NEG_INFINITY, f64::max) * 10.0).ceil() / 10.0;
    if y_max <= y_min {
        y_max = y_min + 0.1;
    }
    let px = |x: f64| left + (x - x_min) / (x_max - x_min) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y_min) / (y_max - y_min) * (h - top - bottom);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - bottom,
        w - right
    ));
    svg.push_str(&format!("<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n", h - bottom));
    for k in 0..=4 {
        let x = x_min + (x_max - x_min) * f64::from(k) / 4.0;
        let y = y_min + (y_max - y_min) * f64::from(k) / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x:.0}</text>\n",
            px(x),
            h - bottom + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y:.2}</text>\n",
            left - 6.0,
            py(y) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">labeled samples</text>\n",
        (left + w - right) / 2.0,
        h - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">performance</text>\n",
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    ));
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = top + 10.0 + 18.0 * k as f64;
        svg.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            w - right + 15.0,
            w - right + 35.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            w - right + 40.0,
            ly + 4.0,
            xml_escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
