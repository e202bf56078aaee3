//! Scenario files, random instances, single runs, sweeps and their outputs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::combo::{sine_chain_check_layer, CoefficientMode, QFunctional, SineChainWitness};
use crate::digraph::{has_spanning_tree, Digraph, GraphFile, NodeDecomposition};
use crate::dynamics::{diameter, integrate, Observables, SolverConfig, SystemParams, Trajectory};
use crate::error::{Error, Result};
use crate::framework::{
    admissible_region, derive_params, entry_time, fd_tolerance, fit_frequency_decay,
    local_growth_excess, monitor_q_inequality, precondition_checks, verify_theorem,
    AdmissibleRegion, Check, DecayFit, FrameworkParams, MonitorResult, OperatingPoint,
    ParamOverrides, TheoremReport,
};

pub const DEFAULT_ARC_WIDTH: f64 = 0.9 * PI;
pub const DEFAULT_SAFETY: f64 = 1.1;
pub const MAX_SWEEP_RUNS: usize = 100_000;
pub const SANDWICH_SLACK: f64 = 1e-10;
pub const THREADS_ENV: &str = "SYNC_LAB_THREADS";

const GRAPH_STREAM: u64 = 1;
const OMEGA_STREAM: u64 = 2;
const THETA_STREAM: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random arborescence from a random root plus independent extra arcs.
pub fn random_spanning_tree_digraph(n: usize, extra_arc_prob: f64, seed: u64) -> Result<Digraph> {
    check_prob(extra_arc_prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut arcs = Vec::new();
    for pos in 1..order.len() {
        let parent = order[rng.gen_range(0..pos)];
        arcs.push((parent, order[pos]));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(extra_arc_prob) {
                arcs.push((j, i));
            }
        }
    }
    Digraph::new(n, arcs)
}

/// Each ordered pair becomes an arc independently with probability `p`.
pub fn random_digraph(n: usize, p: f64, seed: u64) -> Result<Digraph> {
    check_prob(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arcs = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i != j && rng.gen_bool(p) {
                arcs.push((j, i));
            }
        }
    }
    Digraph::new(n, arcs)
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cycle,
    Path,
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomGraph {
    pub n: usize,
    #[serde(default)]
    pub extra_arc_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Family { family: Family, n: usize },
    Random { random: RandomGraph },
    Inline(GraphFile),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Values(Vec<f64>),
    Uniform { uniform: [f64; 2] },
    Identical { identical: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Values(Vec<f64>),
    /// Uniform on `[s, s + arc_width]` with a random start `s`.
    Arc { arc_width: f64 },
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec::Arc { arc_width: DEFAULT_ARC_WIDTH }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    Auto,
}

/// A number or `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Auto(Keyword),
}

impl Default for Setting {
    fn default() -> Self {
        Setting::Auto(Keyword::Auto)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Absolute(f64),
    /// `t_end = τ / K`.
    CouplingUnits { coupling_units: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub graph: GraphSpec,
    pub omega: OmegaSpec,
    #[serde(default)]
    pub theta0: ThetaSpec,
    /// `"auto"` picks `α_max / 2`.
    #[serde(default)]
    pub alpha: Setting,
    /// `"auto"` picks `safety · K_min(α)`.
    #[serde(rename = "K", alias = "coupling", default)]
    pub coupling: Setting,
    #[serde(default = "default_safety")]
    pub safety: f64,
    pub t_end: Horizon,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: ParamOverrides,
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}

/// A concrete graph, frequencies and initial phases.
#[derive(Clone, Debug)]
pub struct Instance {
    pub graph: Digraph,
    pub omega: Vec<f64>,
    pub theta0: Vec<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Generates the instance; relative graph paths resolve against `base`.
    pub fn instance(&self, base: Option<&Path>) -> Result<Instance> {
        let graph = match &self.graph {
            GraphSpec::Inline(file) => Digraph::from_file(file)?,
            GraphSpec::Family { family, n } => match family {
                Family::Cycle => Digraph::cycle(*n)?,
                Family::Path => Digraph::path(*n)?,
                Family::Complete => Digraph::complete(*n)?,
            },
            GraphSpec::Random { random } => {
                let seed = rng_for(self.seed, GRAPH_STREAM).gen();
                random_spanning_tree_digraph(random.n, random.extra_arc_prob, seed)?
            }
            GraphSpec::File(path) => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                Digraph::load(&full)?
            }
        };
        let n = graph.len();
        let omega = match &self.omega {
            OmegaSpec::Values(v) => v.clone(),
            OmegaSpec::Uniform { uniform: [lo, hi] } => {
                if !(lo <= hi) {
                    return Err(Error::InvalidConfig(format!("empty range [{lo}, {hi}]")));
                }
                let mut rng = rng_for(self.seed, OMEGA_STREAM);
                (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
            }
            OmegaSpec::Identical { identical } => vec![*identical; n],
        };
        let theta0 = match &self.theta0 {
            ThetaSpec::Values(v) => v.clone(),
            ThetaSpec::Arc { arc_width } => {
                if !(*arc_width >= 0.0 && *arc_width < PI) {
                    return Err(Error::InvalidConfig(format!(
                        "arc width must lie in [0, π), got {arc_width}"
                    )));
                }
                let mut rng = rng_for(self.seed, THETA_STREAM);
                let start = 2.0 * PI * rng.gen::<f64>();
                (0..n).map(|_| start + arc_width * rng.gen::<f64>()).collect()
            }
        };
        if omega.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: omega.len() });
        }
        if theta0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: theta0.len() });
        }
        Ok(Instance { graph, omega, theta0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    PreconditionUnmet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayOutcome {
    Fitted(DecayFit),
    /// Frequencies already agree to within the floor.
    Locked { reason: String },
    Unavailable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub seed: u64,
    pub layers: Vec<Vec<usize>>,
    pub spanning_tree: bool,
    pub alpha: f64,
    pub coupling: f64,
    pub t_end: f64,
    pub framework: FrameworkParams,
    pub alpha_max: Option<f64>,
    pub operating_point: Option<OperatingPoint>,
    pub preconditions: Vec<Check>,
    pub theorem: Option<TheoremReport>,
    pub monitors: Vec<MonitorResult>,
    pub decay: DecayOutcome,
    pub t_star: Option<f64>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
}

impl RunReport {
    pub fn failed_checks(&self) -> Vec<String> {
        self.preconditions
            .iter()
            .chain(&self.checks)
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect()
    }
}

/// Largest violation of `β·D_k ≤ Qᵏ ≤ D_k` over all samples and layers.
pub fn sandwich_excess(traj: &Trajectory, beta: f64) -> f64 {
    traj.samples
        .iter()
        .flat_map(|s| {
            s.q.iter()
                .zip(&s.layer_diameters)
                .map(|(&q, &dk)| (beta * dk - q).max(q - dk))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_scenario(s: &Scenario) -> Result<(Trajectory, RunReport)> {
    run_scenario_in(s, None)
}

pub fn run_scenario_in(s: &Scenario, base: Option<&Path>) -> Result<(Trajectory, RunReport)> {
    let inst = s.instance(base)?;
    let g = &inst.graph;
    let n = g.len();
    let spanning_tree = has_spanning_tree(g);
    let decomp = NodeDecomposition::peel(g);
    let fp = derive_params(diameter(&inst.theta0), n, decomp.d(), diameter(&inst.omega), s.params)?;
    let region = admissible_region(&fp);
    let need_region = |what: &str| -> Result<&AdmissibleRegion> {
        region.as_ref().map_err(|e| Error::Infeasible(format!("cannot choose {what} automatically: {e}")))
    };
    let alpha = match s.alpha {
        Setting::Value(a) => a,
        Setting::Auto(_) => need_region("alpha")?.alpha_max / 2.0,
    };
    let coupling = match s.coupling {
        Setting::Value(k) => k,
        Setting::Auto(_) => {
            let k_min = need_region("K")?.k_min(alpha);
            if !k_min.is_finite() {
                return Err(Error::Infeasible(format!("α = {alpha} admits no finite coupling")));
            }
            s.safety * if k_min > 0.0 { k_min } else { 1.0 }
        }
    };
    let t_end = match s.t_end {
        Horizon::Absolute(t) => t,
        Horizon::CouplingUnits { coupling_units } => {
            if !(coupling > 0.0) {
                return Err(Error::InvalidConfig("coupling units need K > 0".into()));
            }
            coupling_units / coupling
        }
    };
    let params = SystemParams::new(inst.omega.clone(), coupling, alpha)?;
    let q = QFunctional::new(&decomp, fp.eta, CoefficientMode::General)?;
    let obs = Observables::new(decomp.clone(), q);
    let traj = integrate(g, &params, &obs, &inst.theta0, t_end, &s.solver)?;
    let report = assess(&fp, region.as_ref().ok(), &traj, &decomp, spanning_tree, s.seed);
    Ok((traj, report))
}

/// Evaluates every check on a finished run.
pub fn assess(
    fp: &FrameworkParams,
    region: Option<&AdmissibleRegion>,
    traj: &Trajectory,
    decomp: &NodeDecomposition,
    spanning_tree: bool,
    seed: u64,
) -> RunReport {
    let p = &traj.params;
    let mut preconditions = vec![Check::new(
        "spanning_tree",
        spanning_tree,
        f64::from(u8::from(spanning_tree)),
        1.0,
    )];
    match region {
        Some(r) => preconditions.extend(precondition_checks(r, p, decomp)),
        None => preconditions.push(Check::new("feasible", false, f64::NAN, f64::NAN)),
    }
    let met = preconditions.iter().all(|c| c.pass);

    let theorem = match (met, region) {
        (true, Some(r)) => verify_theorem(fp, r, traj, decomp).ok(),
        _ => None,
    };
    let mut checks = Vec::new();
    checks.push(Check::at_most("sandwich", sandwich_excess(traj, fp.beta), SANDWICH_SLACK));
    if theorem.is_none() {
        checks.push(Check::at_most(
            "local_growth",
            local_growth_excess(traj, fp.zeta),
            fd_tolerance(traj),
        ));
    }
    let monitors: Vec<MonitorResult> = (0..decomp.num_layers())
        .filter_map(|k| monitor_q_inequality(traj, decomp, fp, k).ok())
        .collect();
    for m in &monitors {
        checks.push(Check::at_most(format!("monitor_{}", m.k), m.max_residual, m.tolerance));
    }
    if let Some(t) = &theorem {
        checks.extend(t.checks.iter().cloned());
    }

    let t_star = match &theorem {
        Some(t) => t.t_star,
        None => {
            let diam: Vec<f64> = traj.samples.iter().map(|s| s.diameter).collect();
            entry_time(&traj.times(), &diam, fp.dinf)
        }
    };
    let decay = match fit_frequency_decay(traj, t_star.unwrap_or(0.0)) {
        Ok(fit) => DecayOutcome::Fitted(fit),
        Err(Error::DegenerateData(reason)) => DecayOutcome::Locked { reason },
        Err(e) => DecayOutcome::Unavailable { reason: e.to_string() },
    };
    match &decay {
        DecayOutcome::Fitted(f) => checks.push(Check::new("frequency_decay", f.pass, f.c2, 0.0)),
        DecayOutcome::Locked { .. } => checks.push(Check::new("frequency_decay", true, 0.0, 0.0)),
        DecayOutcome::Unavailable { .. } => {
            checks.push(Check::new("frequency_decay", false, f64::NAN, 0.0))
        }
    }

    let verdict = if !met {
        Verdict::PreconditionUnmet
    } else if checks.iter().all(|c| c.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    RunReport {
        n: p.len(),
        seed,
        layers: decomp.layers().to_vec(),
        spanning_tree,
        alpha: p.frustration,
        coupling: p.coupling,
        t_end: traj.t_end(),
        framework: fp.clone(),
        alpha_max: region.map(|r| r.alpha_max),
        operating_point: region.map(|r| r.operating_point(p.coupling, p.frustration)),
        preconditions,
        theorem,
        monitors,
        decay,
        t_star,
        checks,
        verdict,
    }
}

fn unwritable(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::OutputUnwritable { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(unwritable(path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = fs::File::create(path).map_err(unwritable(path))?;
    traj.write_csv(BufWriter::new(file))
}

/// Writes `trajectory.csv` and `report.json` into `dir`.
pub fn write_run(dir: &Path, traj: &Trajectory, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(unwritable(dir))?;
    write_trajectory(&dir.join("trajectory.csv"), traj)?;
    write_json(&dir.join("report.json"), report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Dotted path into the scenario JSON, e.g. `alpha` or `solver.dt`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: Value,
    #[serde(default)]
    pub axes: Vec<Axis>,
    /// Upper bound on worker threads; also capped by `SYNC_LAB_THREADS`.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn num_runs(&self) -> usize {
        self.axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()))
            .unwrap_or(usize::MAX)
    }

    /// Axis values of cell `index` in row-major order (last axis fastest).
    fn cell(&self, mut index: usize) -> Vec<Value> {
        let mut out = vec![Value::Null; self.axes.len()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            let len = axis.values.len();
            *slot = axis.values[index % len].clone();
            index /= len;
        }
        out
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("`{part}` in `{path}` is not an index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::InvalidConfig(format!("index {idx} out of range in `{path}`")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_string(), value);
                    return Ok(());
                }
                map.entry((*part).to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(Error::InvalidConfig(format!("`{path}` does not name a field"))),
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    Ok(())
}

/// First 16 hex digits of the SHA-256 of the serialized axis values.
pub fn param_hash(values: &[Value]) -> String {
    let text = serde_json::to_string(values).expect("json values serialize");
    Sha256::digest(text.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RowStatus {
    Pass,
    Fail,
    PreconditionUnmet,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub params: BTreeMap<String, Value>,
    pub hash: String,
    pub status: RowStatus,
    pub alpha: Option<f64>,
    pub coupling: Option<f64>,
    pub t_star: Option<f64>,
    pub c2: Option<f64>,
    pub r_squared: Option<f64>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    index: usize,
    hash: &'a str,
    params: String,
    status: RowStatus,
    alpha: Option<f64>,
    coupling: Option<f64>,
    t_star: Option<f64>,
    c2: Option<f64>,
    r_squared: Option<f64>,
    failed_checks: String,
    error: &'a str,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub precondition_unmet: usize,
    pub failed: usize,
}

impl Tally {
    fn add(&mut self, status: RowStatus) {
        self.total += 1;
        match status {
            RowStatus::Pass => self.pass += 1,
            RowStatus::Fail => self.fail += 1,
            RowStatus::PreconditionUnmet => self.precondition_unmet += 1,
            RowStatus::Failed => self.failed += 1,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.total > 0 && self.pass == self.total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub tally: Tally,
    pub rows: Vec<SweepRow>,
}

/// Worker count: the requested hint, capped by `SYNC_LAB_THREADS`.
pub fn thread_budget(hint: Option<usize>) -> usize {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0);
    let want = hint.filter(|&h| h > 0).unwrap_or(avail);
    cap.map_or(want, |c| want.min(c)).max(1)
}

/// Runs every cell of the cartesian product and writes `summary.csv`,
/// `summary.json` and `runs/<hash>.{csv,json}` under `out`.
pub fn run_sweep(spec: &SweepSpec, out: &Path, base: Option<&Path>) -> Result<SweepSummary> {
    let total = spec.num_runs();
    if total > MAX_SWEEP_RUNS {
        return Err(Error::InvalidConfig(format!(
            "sweep has {total} runs, more than the limit of {MAX_SWEEP_RUNS}"
        )));
    }
    if let Some(axis) = spec.axes.iter().find(|a| a.values.is_empty()) {
        return Err(Error::InvalidConfig(format!("axis `{}` has no values", axis.path)));
    }
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(unwritable(&runs_dir))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_budget(spec.threads))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|index| run_cell(spec, index, &runs_dir, base))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by_key(|r| r.index);

    let mut tally = Tally::default();
    for r in &rows {
        tally.add(r.status);
    }
    let summary = SweepSummary { tally, rows };
    write_summary_csv(&out.join("summary.csv"), &summary.rows)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn run_cell(spec: &SweepSpec, index: usize, runs_dir: &Path, base: Option<&Path>) -> Result<SweepRow> {
    let values = spec.cell(index);
    let hash = param_hash(&values);
    let params: BTreeMap<String, Value> =
        spec.axes.iter().map(|a| a.path.clone()).zip(values.iter().cloned()).collect();
    let mut row = SweepRow {
        index,
        params,
        hash,
        status: RowStatus::Failed,
        alpha: None,
        coupling: None,
        t_star: None,
        c2: None,
        r_squared: None,
        checks: Vec::new(),
        error: None,
    };
    let outcome = (|| {
        let mut json = spec.base.clone();
        for (axis, v) in spec.axes.iter().zip(&values) {
            set_path(&mut json, &axis.path, v.clone())?;
        }
        let scenario: Scenario = serde_json::from_value(json)?;
        run_scenario_in(&scenario, base)
    })();
    match outcome {
        Ok((traj, report)) => {
            write_trajectory(&runs_dir.join(format!("{}.csv", row.hash)), &traj)?;
            write_json(&runs_dir.join(format!("{}.json", row.hash)), &report)?;
            row.status = match report.verdict {
                Verdict::Pass => RowStatus::Pass,
                Verdict::Fail => RowStatus::Fail,
                Verdict::PreconditionUnmet => RowStatus::PreconditionUnmet,
            };
            row.alpha = Some(report.alpha);
            row.coupling = Some(report.coupling);
            row.t_star = report.t_star;
            if let DecayOutcome::Fitted(f) = &report.decay {
                row.c2 = Some(f.c2);
                row.r_squared = Some(f.r_squared);
            }
            row.checks = report.preconditions.iter().chain(&report.checks).cloned().collect();
        }
        Err(e @ Error::OutputUnwritable { .. }) => return Err(e),
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

fn write_summary_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(unwritable(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        w.serialize(SummaryRecord {
            index: r.index,
            hash: &r.hash,
            params: serde_json::to_string(&r.params)?,
            status: r.status,
            alpha: r.alpha,
            coupling: r.coupling,
            t_star: r.t_star,
            c2: r.c2,
            r_squared: r.r_squared,
            failed_checks: failed.join(";"),
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(unwritable(path))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirReport {
    pub kind: String,
    pub tally: Tally,
    pub failing: Vec<String>,
}

/// Summarizes a run directory (`report.json`) or a sweep directory
/// (`summary.json`).
pub fn summarize_dir(dir: &Path) -> Result<DirReport> {
    let sweep = dir.join("summary.json");
    if sweep.is_file() {
        let summary: SweepSummary = serde_json::from_str(&fs::read_to_string(&sweep)?)?;
        let failing = summary
            .rows
            .iter()
            .filter(|r| r.status != RowStatus::Pass)
            .map(|r| format!("{} {:?}", r.hash, r.status))
            .collect();
        return Ok(DirReport { kind: "sweep".into(), tally: summary.tally, failing });
    }
    let single = dir.join("report.json");
    if single.is_file() {
        let report: RunReport = serde_json::from_str(&fs::read_to_string(&single)?)?;
        let mut tally = Tally::default();
        tally.add(match report.verdict {
            Verdict::Pass => RowStatus::Pass,
            Verdict::Fail => RowStatus::Fail,
            Verdict::PreconditionUnmet => RowStatus::PreconditionUnmet,
        });
        return Ok(DirReport { kind: "run".into(), tally, failing: report.failed_checks() });
    }
    Err(Error::InvalidConfig(format!(
        "{} holds neither summary.json nor report.json",
        dir.display()
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineChainSummary {
    pub n: usize,
    pub eta: f64,
    pub gamma: f64,
    pub samples: u64,
    pub violations: u64,
    /// Smallest violating sample index with its witness.
    pub first_violation: Option<(u64, SineChainWitness)>,
}

/// One random configuration for the sine-chain check: a strongly connected
/// digraph on `n` vertices and phases with diameter below `gamma`.
pub fn sine_chain_instance(n: usize, gamma: f64, seed: u64, index: u64) -> Result<(Digraph, Vec<f64>)> {
    let mut rng = rng_for(seed, index);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut arcs: Vec<(usize, usize)> = if n > 1 {
        (0..n).map(|i| (order[i], order[(i + 1) % n])).collect()
    } else {
        Vec::new()
    };
    let p: f64 = rng.gen();
    for j in 0..n {
        for i in 0..n {
            if i != j && rng.gen_bool(p) {
                arcs.push((j, i));
            }
        }
    }
    let g = Digraph::new(n, arcs)?;
    let width = gamma * rng.gen::<f64>();
    let coarse = rng.gen_bool(0.1);
    let theta = (0..n)
        .map(|_| {
            let x: f64 = rng.gen();
            if coarse {
                width * (x * 4.0).floor() / 4.0
            } else {
                width * x
            }
        })
        .collect();
    Ok((g, theta))
}

/// Randomized search for violations of the sine-chain inequalities.
pub fn sine_chain_falsification(
    n: usize,
    eta: f64,
    gamma: f64,
    samples: u64,
    seed: u64,
    slack: f64,
) -> Result<SineChainSummary> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one oscillator".into()));
    }
    let everyone: Vec<usize> = (0..n).collect();
    let found = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Option<(u64, SineChainWitness)>> {
            let (g, theta) = sine_chain_instance(n, gamma, seed, i)?;
            let out = sine_chain_check_layer(&g, &everyone, &theta, eta, gamma, slack)?;
            Ok(out.witness.map(|w| (i, w)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hits: Vec<(u64, SineChainWitness)> = found.into_iter().flatten().collect();
    hits.sort_by_key(|h| h.0);
    Ok(SineChainSummary {
        n,
        eta,
        gamma,
        samples,
        violations: hits.len() as u64,
        first_violation: hits.into_iter().next(),
    })
}
