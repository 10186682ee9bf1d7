//! Batch front end behind the `distsynth` binary.
//!
//! Every subcommand writes its artifacts into an output directory together
//! with `run.json`, which records the command, the seed and the full
//! configuration. Exit codes: 0 on success, 2 on input errors, 3 when the
//! solver or an oracle does not converge (artifacts are still written).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::admm::{solve, trace_csv, AdmmParams, SolutionFile, SolveReport};
use crate::decomposition::{decompose, grid_r_division, verify_lemma1, Decomposition, Partition};
use crate::error::{Error, Result};
use crate::gridworld::{build_gridworld, discounted_reward_fn, room_layout, wall_partition, Cell, GridSpec};
use crate::lp::{build_average, build_discounted, build_transient, export_block_lp, extract_policy, BlockLp};
use crate::mdp::{average_reward_eval, reachability_max, value_iteration_discounted, Mdp, Policy, RewardFn, StateId};
use crate::product::{
    accepting_end_components, buchi_frequency_reward, product_buchi, product_rabin, sinkify, stitch_policy,
    AcceptingEc, DeterministicAutomaton, ProductMdp, Sinkified,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

/// Discount factor of the average-reward approximation when none is given.
pub const APPROX_GAMMA: f64 = 0.98;

const ORACLE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Discounted,
    Average,
    /// Discounted LP scaled by 1−γ.
    AverageApprox,
    /// Maximal probability of satisfying a Rabin objective.
    ReachRabin,
    /// Long-run frequency of visits to Büchi-accepting product states.
    BuchiFreq,
}

impl Mode {
    fn needs_automaton(self) -> bool {
        matches!(self, Mode::ReachRabin | Mode::BuchiFreq)
    }

    fn uses_gamma(self) -> bool {
        matches!(self, Mode::Discounted | Mode::AverageApprox)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Input {
    /// MDP file in the JSON interchange format.
    Mdp(PathBuf),
    /// Grid spec; the MDP and its rewards are generated from it.
    Grid(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionSource {
    Single,
    File(PathBuf),
    /// Grid r-division; needs a grid input.
    RDivision(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub gamma: Option<f64>,
    pub admm: AdmmParams,
    pub partition: PartitionSource,
    pub input: Input,
    pub automaton: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub compare_oracle: bool,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(input: Input, mode: Mode) -> Self {
        RunConfig {
            mode,
            gamma: None,
            admm: AdmmParams::default(),
            partition: PartitionSource::Single,
            input,
            automaton: None,
            out: None,
            compare_oracle: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, self.gamma) {
            (Mode::Discounted, None) => return Err(Error::Parameter("--gamma is required for mode discounted".into())),
            (m, Some(g)) if m.uses_gamma() && !(g > 0.0 && g < 1.0) => {
                return Err(Error::Parameter(format!("--gamma must lie in (0, 1), got {g}")))
            }
            (m, Some(_)) if !m.uses_gamma() => {
                return Err(Error::Parameter(format!("--gamma has no meaning for mode {m:?}")))
            }
            _ => {}
        }
        if self.mode.needs_automaton() != self.automaton.is_some() {
            return Err(Error::Parameter(if self.automaton.is_some() {
                "--automaton only applies to reach-rabin and buchi-freq".into()
            } else {
                "this mode needs --automaton".into()
            }));
        }
        if matches!(self.partition, PartitionSource::RDivision(_)) && !matches!(self.input, Input::Grid(_)) {
            return Err(Error::Parameter("--r needs a --grid input".into()));
        }
        self.admm.validate()
    }

    /// γ actually used by the discounted modes.
    pub fn effective_gamma(&self) -> Option<f64> {
        match self.mode {
            Mode::Discounted => self.gamma,
            Mode::AverageApprox => Some(self.gamma.unwrap_or(APPROX_GAMMA)),
            _ => None,
        }
    }
}

/// The MDP as loaded, plus the grid it came from, if any.
pub struct Loaded {
    pub mdp: Mdp,
    pub reward: Option<RewardFn>,
    pub grid: Option<GridSpec>,
}

pub fn load_input(input: &Input) -> Result<Loaded> {
    match input {
        Input::Mdp(path) => {
            let (mdp, reward) = Mdp::load(path).map_err(|e| e.in_file(path))?;
            Ok(Loaded { mdp, reward, grid: None })
        }
        Input::Grid(path) => {
            let grid = GridSpec::load(path).map_err(|e| e.in_file(path))?;
            let mdp = build_gridworld(&grid)?;
            let reward = Some(discounted_reward_fn(&grid)?);
            Ok(Loaded { mdp, reward, grid: Some(grid) })
        }
    }
}

fn load_automaton(cfg: &RunConfig) -> Result<DeterministicAutomaton> {
    let path = cfg.automaton.as_ref().expect("validated");
    DeterministicAutomaton::load(path).map_err(|e| e.in_file(path))
}

/// Partition of the loaded (base) MDP.
pub fn resolve_partition(src: &PartitionSource, loaded: &Loaded) -> Result<Partition> {
    match src {
        PartitionSource::Single => Ok(Partition::single(loaded.mdp.num_states())),
        PartitionSource::File(path) => Partition::load(&loaded.mdp, path).map_err(|e| e.in_file(path)),
        PartitionSource::RDivision(r) => {
            let grid = loaded.grid.as_ref().ok_or_else(|| Error::Parameter("--r needs a --grid input".into()))?;
            Ok(grid_r_division(grid, *r)?.partition)
        }
    }
}

/// What the LP is built on.
pub enum Model {
    Plain { mdp: Mdp, reward: RewardFn },
    Reach { product: ProductMdp, sink: Sinkified, aecs: Vec<AcceptingEc>, accepting: BTreeSet<StateId> },
    Buchi { product: ProductMdp, reward: RewardFn },
}

impl Model {
    /// MDP whose state-action pairs the reported policy ranges over.
    pub fn policy_mdp(&self) -> &Mdp {
        match self {
            Model::Plain { mdp, .. } => mdp,
            Model::Reach { product, .. } | Model::Buchi { product, .. } => &product.mdp,
        }
    }
}

/// Loaded model together with the partition of its LP MDP.
pub struct Setup {
    pub model: Model,
    pub partition: Partition,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    cfg.validate()?;
    let loaded = load_input(&cfg.input)?;
    let base_partition = resolve_partition(&cfg.partition, &loaded)?;
    let Loaded { mdp, reward, .. } = loaded;
    match cfg.mode {
        Mode::Discounted | Mode::Average | Mode::AverageApprox => {
            let reward = reward.ok_or_else(|| Error::Parameter("the MDP file carries no rewards".into()))?;
            Ok(Setup { model: Model::Plain { mdp, reward }, partition: base_partition })
        }
        Mode::ReachRabin => {
            let dra = load_automaton(cfg)?;
            let product = product_rabin(&mdp, &dra)?;
            let (aecs, accepting) = accepting_end_components(&product);
            let sink = sinkify(&product, &accepting);
            let partition = sink.lift_partition(&product.lift_partition(&mdp, &base_partition)?)?;
            Ok(Setup { model: Model::Reach { product, sink, aecs, accepting }, partition })
        }
        Mode::BuchiFreq => {
            let dba = load_automaton(cfg)?;
            let product = product_buchi(&mdp, &dba)?;
            let reward = buchi_frequency_reward(&product);
            let partition = product.lift_partition(&mdp, &base_partition)?;
            Ok(Setup { model: Model::Buchi { product, reward }, partition })
        }
    }
}

/// Block LP of a model. The reported value is `scale·objective + offset`;
/// `lp` is `None` when nothing is left to optimize.
pub struct Problem {
    pub lp: Option<BlockLp>,
    pub decomposition: Option<Decomposition>,
    pub scale: f64,
    pub offset: f64,
}

impl Problem {
    pub fn value(&self, objective: f64) -> f64 {
        self.scale * objective + self.offset
    }
}

pub fn build_problem(cfg: &RunConfig, s: &Setup) -> Result<Problem> {
    match &s.model {
        Model::Plain { mdp, reward } => {
            let d = decompose(mdp, &s.partition)?;
            let (lp, scale) = match cfg.mode {
                Mode::Average => (build_average(mdp, &d, reward)?, 1.0),
                _ => {
                    let g = cfg.effective_gamma().expect("validated");
                    let scale = if cfg.mode == Mode::AverageApprox { 1.0 - g } else { 1.0 };
                    (build_discounted(mdp, &d, reward, g, None)?, scale)
                }
            };
            Ok(Problem { lp: Some(lp), decomposition: Some(d), scale, offset: 0.0 })
        }
        Model::Reach { sink, .. } => {
            let offset = sink.init()[sink.sink];
            let terminal = sink.terminal();
            if terminal.len() == sink.mdp.num_states() {
                return Ok(Problem { lp: None, decomposition: None, scale: 1.0, offset });
            }
            let d = decompose(&sink.mdp, &s.partition)?;
            let lp = build_transient(&sink.mdp, &d, &sink.reward, sink.init(), &terminal)?;
            Ok(Problem { lp: Some(lp), decomposition: Some(d), scale: 1.0, offset })
        }
        Model::Buchi { product, reward } => {
            let d = decompose(&product.mdp, &s.partition)?;
            let lp = build_average(&product.mdp, &d, reward)?;
            Ok(Problem { lp: Some(lp), decomposition: Some(d), scale: 1.0, offset: 0.0 })
        }
    }
}

/// Value computed by the dynamic-programming oracles.
#[derive(Clone, Debug)]
pub struct OracleValue {
    pub value: f64,
    /// Per-state values over [`Model::policy_mdp`] (bias for average modes).
    pub per_state: Vec<f64>,
    pub policy: Policy,
}

pub fn oracle(cfg: &RunConfig, s: &Setup) -> Result<OracleValue> {
    match &s.model {
        Model::Plain { mdp, reward } => match cfg.mode {
            Mode::Average => {
                let r = average_reward_eval(mdp, reward, 1e-12)?;
                Ok(OracleValue { value: r.scalar, per_state: r.per_state, policy: r.policy })
            }
            _ => {
                let g = cfg.effective_gamma().expect("validated");
                let scale = if cfg.mode == Mode::AverageApprox { 1.0 - g } else { 1.0 };
                let r = value_iteration_discounted(mdp, reward, g, ORACLE_TOL)?;
                Ok(OracleValue {
                    value: scale * r.scalar,
                    per_state: r.per_state.iter().map(|v| scale * v).collect(),
                    policy: r.policy,
                })
            }
        },
        Model::Reach { product, accepting, aecs, sink } => {
            if accepting.is_empty() {
                let n = product.num_states();
                return Ok(OracleValue { value: 0.0, per_state: vec![0.0; n], policy: Policy::uniform(&product.mdp) });
            }
            let r = reachability_max(&product.mdp, accepting, ORACLE_TOL)?;
            let reach_policy = Policy {
                probs: (0..sink.mdp.num_states())
                    .map(|w| {
                        let v = sink.state_map.iter().position(|m| *m == Some(w));
                        match v {
                            Some(v) => r.policy.probs[v].clone(),
                            None => vec![1.0 / sink.mdp.choices(w).len() as f64; sink.mdp.choices(w).len()],
                        }
                    })
                    .collect(),
                flagged: Vec::new(),
            };
            let policy = stitch_policy(product, sink, &reach_policy, aecs);
            Ok(OracleValue { value: r.scalar, per_state: r.per_state, policy })
        }
        Model::Buchi { product, reward } => {
            let r = average_reward_eval(&product.mdp, reward, 1e-12)?;
            Ok(OracleValue { value: r.scalar, per_state: r.per_state, policy: r.policy })
        }
    }
}

/// |value − oracle| / |oracle|, or the absolute gap when the oracle is 0.
pub fn relative_error(value: f64, oracle: f64) -> f64 {
    let gap = (value - oracle).abs();
    if oracle == 0.0 {
        gap
    } else {
        gap / oracle.abs()
    }
}

pub struct SolveOutcome {
    pub report: SolveReport,
    pub value: f64,
    pub policy: Policy,
    pub oracle: Option<f64>,
    pub rel_error: Option<f64>,
    pub lp: Option<BlockLp>,
}

/// Loads the model, builds the LP, runs ADMM and, if asked, the oracle.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutcome> {
    solve_setup(cfg, &setup(cfg)?)
}

pub fn solve_setup(cfg: &RunConfig, s: &Setup) -> Result<SolveOutcome> {
    let problem = build_problem(cfg, s)?;
    let (report, policy) = match &problem.lp {
        Some(lp) => {
            let report = solve(lp, &cfg.admm)?;
            let f = extract_policy(lp, &report.x);
            let policy = match &s.model {
                Model::Reach { product, sink, aecs, .. } => stitch_policy(product, sink, &f, aecs),
                _ => f,
            };
            (report, policy)
        }
        None => {
            let report = SolveReport {
                x: Vec::new(),
                objective: 0.0,
                infeasibility: 0.0,
                iterations: 0,
                converged: true,
                trace: Vec::new(),
            };
            let policy = match &s.model {
                Model::Reach { product, sink, aecs, .. } => {
                    stitch_policy(product, sink, &Policy::uniform(&sink.mdp), aecs)
                }
                m => Policy::uniform(m.policy_mdp()),
            };
            (report, policy)
        }
    };
    let value = problem.value(report.objective);
    let oracle_value = if cfg.compare_oracle { Some(oracle(cfg, s)?.value) } else { None };
    Ok(SolveOutcome {
        rel_error: oracle_value.map(|o| relative_error(value, o)),
        oracle: oracle_value,
        value,
        policy,
        report,
        lp: problem.lp,
    })
}

/// `{state: {action: probability}}` with zero entries left out.
pub fn policy_json(mdp: &Mdp, f: &Policy) -> Value {
    let mut out = serde_json::Map::new();
    for s in 0..mdp.num_states() {
        let row: serde_json::Map<String, Value> = mdp
            .choices(s)
            .iter()
            .zip(&f.probs[s])
            .filter(|(_, &p)| p > 0.0)
            .map(|(c, &p)| (mdp.action_name(c.action).to_string(), json!(p)))
            .collect();
        out.insert(mdp.state_name(s).to_string(), Value::Object(row));
    }
    Value::Object(out)
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn write_run(dir: &Path, command: &str, seed: u64, config: Value) -> Result<()> {
    let run = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
    });
    write_json(&dir.join("run.json"), &run)
}

fn out_dir(cfg: &RunConfig) -> Result<Option<&Path>> {
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
    }
    Ok(cfg.out.as_deref())
}

/// Writes `solution.json`, `trace.csv`, `report.json`, `policy.json` and
/// `run.json` into `cfg.out`.
pub fn write_solve_artifacts(cfg: &RunConfig, o: &SolveOutcome, policy_mdp: &Mdp) -> Result<()> {
    let Some(dir) = out_dir(cfg)? else { return Ok(()) };
    let mut solution = match &o.lp {
        Some(lp) => SolutionFile::new(lp, &o.report),
        None => SolutionFile { x: BTreeMap::new(), objective: 0.0, infeasibility: 0.0, iterations: 0, converged: true },
    };
    solution.objective = o.report.objective;
    solution.save(dir.join("solution.json"))?;
    std::fs::write(dir.join("trace.csv"), trace_csv(&o.report.trace))?;
    let mut report = json!({
        "mode": cfg.mode,
        "objective": o.report.objective,
        "value": o.value,
        "infeasibility": o.report.infeasibility,
        "iterations": o.report.iterations,
        "converged": o.report.converged,
        "flagged_states": o.policy.flagged.iter().map(|&s| policy_mdp.state_name(s)).collect::<Vec<_>>(),
    });
    if let (Some(oracle), Some(rel)) = (o.oracle, o.rel_error) {
        report["oracle"] = json!(oracle);
        report["rel_error"] = json!(rel);
    }
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("policy.json"), &policy_json(policy_mdp, &o.policy))?;
    write_run(dir, "solve", cfg.seed, serde_json::to_value(cfg)?)
}

#[derive(Debug, Parser)]
#[command(name = "distsynth", version, about = "Decomposition-based MDP synthesis with block-splitting ADMM")]
pub struct Cli {
    /// Seed for randomized generation; recorded in every run.json.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a gridworld: grid.json, mdp.json and, with rooms, partition.json.
    /// Unless the spec labels cells itself, targets are labeled `goal` and
    /// restricted cells `avoid`.
    GenGridworld(GenArgs),
    /// Partition an MDP and write the K₀/kernel decomposition.
    Decompose(DecomposeArgs),
    /// Build the block LP and export its blocks as CSV.
    BuildLp(BuildArgs),
    /// Solve with ADMM.
    Solve(SolveArgs),
    /// Solve with the dynamic-programming oracle.
    Oracle(OracleArgs),
    /// Relative error between a solve report and an oracle result.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// MDP file (JSON).
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    pub mdp: Option<PathBuf>,
    /// Grid spec (JSON, or TOML by extension).
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

impl InputArgs {
    fn input(&self) -> Input {
        match (&self.mdp, &self.grid) {
            (Some(p), _) => Input::Mdp(p.clone()),
            (None, Some(g)) => Input::Grid(g.clone()),
            (None, None) => unreachable!("clap requires one of --mdp/--grid"),
        }
    }
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Partition file, or `single`.
    #[arg(long, conflicts_with = "r")]
    pub partition: Option<String>,
    /// Grid r-division into tiles of about r cells (needs --grid).
    #[arg(long)]
    pub r: Option<usize>,
}

impl PartitionArgs {
    fn source(&self) -> PartitionSource {
        match (&self.partition, self.r) {
            (_, Some(r)) => PartitionSource::RDivision(r),
            (Some(p), None) if p == "single" => PartitionSource::Single,
            (Some(p), None) => PartitionSource::File(PathBuf::from(p)),
            (None, None) => PartitionSource::Single,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModeArgs {
    #[arg(long, value_enum, default_value = "discounted")]
    pub mode: Mode,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Automaton file for reach-rabin and buchi-freq.
    #[arg(long)]
    pub automaton: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdmmArgs {
    #[arg(long, default_value_t = 1000.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_rel: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps_abs: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub trace_every: usize,
}

impl AdmmArgs {
    fn params(&self) -> AdmmParams {
        AdmmParams {
            rho: self.rho,
            eps_rel: self.eps_rel,
            eps_abs: self.eps_abs,
            max_iter: self.max_iter,
            trace_every: self.trace_every,
            threads: self.threads,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Base spec; width, height and rooms are then ignored.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub width: usize,
    #[arg(long, default_value_t = 20)]
    pub height: usize,
    #[arg(long, default_value_t = 1)]
    pub rooms_x: usize,
    #[arg(long, default_value_t = 1)]
    pub rooms_y: usize,
    #[arg(long, default_value_t = 1)]
    pub targets: usize,
    #[arg(long, default_value_t = 5)]
    pub restricted: usize,
    /// Start cell as `x,y`.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[command(flatten)]
    pub admm: AdmmArgs,
    /// Also run the oracle and report the relative error.
    #[arg(long)]
    pub compare_oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// report.json written by `solve`.
    #[arg(long)]
    pub report: PathBuf,
    /// oracle.json written by `oracle`.
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn config(input: &InputArgs, mode: &ModeArgs, partition: Option<&PartitionArgs>, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(input.input(), mode.mode);
    cfg.gamma = mode.gamma;
    cfg.automaton = mode.automaton.clone();
    cfg.partition = partition.map_or(PartitionSource::Single, PartitionArgs::source);
    cfg.seed = seed;
    cfg
}

fn parse_cell(s: &str) -> Result<Cell> {
    let bad = || Error::Parameter(format!("cell `{s}` is not of the form x,y"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok(Cell(x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn gen_gridworld(a: &GenArgs, seed: Option<u64>) -> Result<u8> {
    let (mut spec, rooms) = match &a.spec {
        Some(path) => (GridSpec::load(path).map_err(|e| e.in_file(path))?, None),
        None if a.rooms_x * a.rooms_y > 1 => {
            let layout = room_layout(a.width, a.height, a.rooms_x, a.rooms_y)?;
            (layout.spec, Some(layout.rooms))
        }
        None => (GridSpec::open(a.width, a.height), None),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(c) = &a.start {
        spec.start = vec![parse_cell(c)?];
    }
    spec.validate()?;
    if spec.targets.is_empty() && spec.restricted.is_empty() {
        spec.place_random(a.targets, a.restricted)?;
    }
    if spec.labeled_regions.is_empty() {
        spec.labeled_regions.insert("goal".into(), spec.targets.clone());
        spec.labeled_regions.insert("avoid".into(), spec.restricted.clone());
    }
    let mdp = build_gridworld(&spec)?;
    let reward = discounted_reward_fn(&spec)?;
    std::fs::create_dir_all(&a.out)?;
    spec.save(a.out.join("grid.json"))?;
    mdp.save(a.out.join("mdp.json"), Some(&reward))?;
    if let Some(rooms) = &rooms {
        let pi = wall_partition(&spec, rooms)?;
        std::fs::write(a.out.join("partition.json"), pi.to_json_string(&mdp)?)?;
    }
    let config = json!({
        "width": spec.width,
        "height": spec.height,
        "rooms": [a.rooms_x, a.rooms_y],
        "targets": spec.targets,
        "restricted": spec.restricted,
        "base_spec": a.spec,
    });
    write_run(&a.out, "gen-gridworld", spec.seed, config)?;
    println!("{} states, {} walls, seed {}", mdp.num_states(), spec.walls.len(), spec.seed);
    Ok(EXIT_OK)
}

fn cmd_decompose(a: &DecomposeArgs, seed: u64) -> Result<u8> {
    let loaded = load_input(&a.input.input())?;
    let src = a.partition.source();
    let pi = resolve_partition(&src, &loaded)?;
    let d = decompose(&loaded.mdp, &pi)?;
    let lemma = verify_lemma1(&loaded.mdp, &d);
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("partition.json"), pi.to_json_string(&loaded.mdp)?)?;
    std::fs::write(a.out.join("decomposition.json"), d.to_json_string(&loaded.mdp)?)?;
    write_run(&a.out, "decompose", seed, json!({ "input": a.input.input(), "partition": src }))?;
    println!(
        "{} regions, |K0| = {}, kernels {:?}, predecessor check {}",
        pi.len(),
        d.k0.len(),
        d.kernels.iter().map(Vec::len).collect::<Vec<_>>(),
        if lemma.holds { "holds" } else { "violated" }
    );
    Ok(EXIT_OK)
}

fn cmd_build_lp(a: &BuildArgs, seed: u64) -> Result<u8> {
    let mut cfg = config(&a.input, &a.mode, Some(&a.partition), seed);
    cfg.out = Some(a.out.clone());
    let s = setup(&cfg)?;
    let problem = build_problem(&cfg, &s)?;
    std::fs::create_dir_all(&a.out)?;
    match &problem.lp {
        Some(lp) => {
            export_block_lp(lp, &a.out)?;
            println!(
                "{} blocks, {} rows, {} columns, {} nonzero blocks",
                lp.num_blocks(),
                lp.total_rows(),
                lp.total_cols(),
                lp.blocks.len()
            );
        }
        None => println!("nothing to optimize: value is {}", problem.offset),
    }
    write_run(&a.out, "build-lp", seed, serde_json::to_value(&cfg)?)?;
    Ok(EXIT_OK)
}

fn cmd_solve(a: &SolveArgs, seed: u64) -> Result<u8> {
    let mut cfg = config(&a.input, &a.mode, Some(&a.partition), seed);
    cfg.admm = a.admm.params();
    cfg.compare_oracle = a.compare_oracle;
    cfg.out = Some(a.out.clone());
    let s = setup(&cfg)?;
    let o = solve_setup(&cfg, &s)?;
    write_solve_artifacts(&cfg, &o, s.model.policy_mdp())?;
    print!(
        "value {:.6} objective {:.6} infeasibility {:.3e} iterations {} converged {}",
        o.value, o.report.objective, o.report.infeasibility, o.report.iterations, o.report.converged
    );
    if let (Some(or), Some(rel)) = (o.oracle, o.rel_error) {
        print!(" oracle {or:.6} rel_error {rel:.3e}");
    }
    println!();
    Ok(if o.report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_oracle(a: &OracleArgs, seed: u64) -> Result<u8> {
    let mut cfg = config(&a.input, &a.mode, None, seed);
    cfg.out = a.out.clone();
    let s = setup(&cfg)?;
    let o = oracle(&cfg, &s)?;
    let mdp = s.model.policy_mdp();
    if let Some(dir) = out_dir(&cfg)? {
        let per_state: BTreeMap<&str, f64> =
            (0..mdp.num_states()).map(|v| (mdp.state_name(v), o.per_state[v])).collect();
        let out = json!({
            "mode": cfg.mode,
            "value": o.value,
            "per_state": per_state,
            "policy": policy_json(mdp, &o.policy),
        });
        write_json(&dir.join("oracle.json"), &out)?;
        write_run(dir, "oracle", seed, serde_json::to_value(&cfg)?)?;
    }
    println!("value {:.10}", o.value);
    Ok(EXIT_OK)
}

fn number_field(path: &Path, v: &Value, key: &str) -> Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Format(format!("{}: no numeric field `{key}`", path.display())))
}

fn cmd_compare(a: &CompareArgs, seed: u64) -> Result<u8> {
    let read = |p: &Path| -> Result<Value> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::from(e).in_file(p))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(p))
    };
    let report = read(&a.report)?;
    let oracle_v = read(&a.oracle)?;
    let value = number_field(&a.report, &report, "value")?;
    let oracle = number_field(&a.oracle, &oracle_v, "value")?;
    let rel = relative_error(value, oracle);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("compare.json"), &json!({ "value": value, "oracle": oracle, "rel_error": rel }))?;
        write_run(dir, "compare", seed, json!({ "report": a.report, "oracle": a.oracle }))?;
    }
    println!("value {value:.10} oracle {oracle:.10} rel_error {rel:.6e}");
    Ok(EXIT_OK)
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::File { source, .. } => exit_code(source),
        _ => EXIT_INPUT,
    }
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: &Cli) -> Result<u8> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::GenGridworld(a) => gen_gridworld(a, cli.seed),
        Command::Decompose(a) => cmd_decompose(a, seed),
        Command::BuildLp(a) => cmd_build_lp(a, seed),
        Command::Solve(a) => cmd_solve(a, seed),
        Command::Oracle(a) => cmd_oracle(a, seed),
        Command::Compare(a) => cmd_compare(a, seed),
    }
}
