//! Explicit sufficient conditions on `(K, α)`, stopping-time bounds, and the
//! runtime checks evaluated along simulated trajectories.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::combo::permutation_sum;
use crate::digraph::NodeDecomposition;
use crate::dynamics::{SystemParams, Trajectory};
use crate::error::{Error, Result};

/// Frequency diameters at or below this are treated as exact locking.
pub const FREQUENCY_FLOOR: f64 = 1e-12;
pub const MIN_R_SQUARED: f64 = 0.95;

/// Optional replacements for the default `ζ`, `γ`, `η` and `D^∞`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub zeta: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub dinf: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameworkParams {
    pub n: usize,
    pub d: usize,
    /// `D(θ(0))`.
    pub d0: f64,
    pub zeta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub beta: f64,
    pub c: f64,
    pub dinf: f64,
    /// `D(Ω)`.
    pub d_omega: f64,
}

/// `(Σ_{j=1}^{n−1} η^j A(2n, j) + 1)·γ / sin γ`.
pub fn c_constant(n: usize, eta: f64, gamma: f64) -> f64 {
    (permutation_sum(2 * n, n.saturating_sub(1), eta) + 1.0) * gamma / gamma.sin()
}

/// Smallest `η` allowed for the given `ζ < γ`.
pub fn eta_floor(zeta: f64, gamma: f64) -> f64 {
    (1.0 / gamma.sin()).max(2.0 / (1.0 - zeta / gamma))
}

pub fn derive_params(
    d0: f64,
    n: usize,
    d: usize,
    d_omega: f64,
    overrides: ParamOverrides,
) -> Result<FrameworkParams> {
    if !(0.0..PI).contains(&d0) {
        return Err(Error::InvalidInitialDiameter(d0));
    }
    if n == 0 || d >= n {
        return Err(Error::InvalidConfig(format!("need 0 ≤ d < N, got N = {n}, d = {d}")));
    }
    if !(d_omega >= 0.0) || !d_omega.is_finite() {
        return Err(Error::InvalidConfig(format!("D(Ω) must be finite and ≥ 0, got {d_omega}")));
    }
    let zeta = overrides.zeta.unwrap_or(d0 + 0.9 * (PI - d0) / 2.0);
    let gamma = overrides.gamma.unwrap_or(d0 + 0.95 * (PI - d0));
    if !(d0 < zeta && zeta < gamma && gamma < PI) {
        return Err(Error::InvalidConfig(format!(
            "need D0 < ζ < γ < π, got D0 = {d0}, ζ = {zeta}, γ = {gamma}"
        )));
    }
    let floor = eta_floor(zeta, gamma);
    let eta = overrides.eta.unwrap_or(1.05 * floor);
    if !eta.is_finite() || !(eta > floor) {
        return Err(Error::InvalidConfig(format!("η = {eta} must exceed {floor}")));
    }
    let beta = 1.0 - 2.0 / eta;
    if !(beta > 0.0 && beta < 1.0) || !(zeta / beta < gamma) {
        return Err(Error::InvalidConfig(format!(
            "β = {beta} must lie in (0, 1) with ζ/β < γ"
        )));
    }
    let c = c_constant(n, eta, gamma);
    if !c.is_finite() || !(c > 0.0) {
        return Err(Error::Overflow(format!("c is not finite for N = {n}, η = {eta}")));
    }
    let dinf = overrides.dinf.unwrap_or((0.5f64).min(zeta / 2.0));
    if !(dinf > 0.0 && dinf < zeta.min(PI / 2.0)) {
        return Err(Error::InvalidConfig(format!(
            "D∞ = {dinf} must lie in (0, min(ζ, π/2))"
        )));
    }
    Ok(FrameworkParams { n, d, d0, zeta, gamma, eta, beta, c, dinf, d_omega })
}

impl FrameworkParams {
    /// `1 + (d+1)ζ/(ζ − D0)`.
    pub fn m(&self) -> f64 {
        1.0 + (self.d + 1) as f64 * self.zeta / (self.zeta - self.d0)
    }

    /// `4(2N+1)c`.
    pub fn layer_ratio(&self) -> f64 {
        4.0 * (2 * self.n + 1) as f64 * self.c
    }

    /// `β^{d−k} D^∞ / [4(2N+1)c]^{d−k}` for `k = 0..=d`.
    pub fn layer_targets(&self) -> Vec<f64> {
        (0..=self.d)
            .map(|k| {
                let e = (self.d - k) as i32;
                self.dinf * (self.beta / self.layer_ratio()).powi(e)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegion {
    pub params: FrameworkParams,
    /// `(1 + (d+1)ζ/(ζ−D0))·c·[4(2N+1)c]^d / (β^{d+1} D^∞)`.
    pub x: f64,
    pub alpha_max: f64,
}

pub fn admissible_region(fp: &FrameworkParams) -> Result<AdmissibleRegion> {
    let x = fp.m() * fp.c * fp.layer_ratio().powi(fp.d as i32)
        / (fp.beta.powi(fp.d as i32 + 1) * fp.dinf);
    if !x.is_finite() {
        return Err(Error::Infeasible(format!(
            "the admissibility constant overflows (N = {}, d = {})",
            fp.n, fp.d
        )));
    }
    let tan_limit = (1.0 / (2.0 * fp.n as f64 * x)).atan();
    let alpha_max = tan_limit.min(PI / 2.0 - fp.dinf);
    if !(alpha_max > 0.0) {
        return Err(Error::Infeasible(format!(
            "no positive frustration is admissible (α_max = {alpha_max})"
        )));
    }
    Ok(AdmissibleRegion { params: fp.clone(), x, alpha_max })
}

/// Both admissibility lines evaluated at a concrete `(K, α)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionValues {
    pub tan_alpha: f64,
    pub tan_bound: f64,
    pub dinf_plus_alpha: f64,
    /// Left side of the coupling line; admissible when `< 1`.
    pub coupling_lhs: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub alpha: f64,
    pub coupling: f64,
    pub k_min: f64,
    pub tbar: f64,
    pub tk_bounds: Vec<f64>,
    pub targets: Vec<f64>,
    pub conditions: ConditionValues,
}

impl AdmissibleRegion {
    fn spread_rate(&self, coupling: f64, alpha: f64) -> f64 {
        self.params.d_omega + 2.0 * self.params.n as f64 * coupling * alpha.sin()
    }

    /// Smallest admissible coupling; infinite outside `[0, α_max)`.
    pub fn k_min(&self, alpha: f64) -> f64 {
        if !(0.0..self.alpha_max).contains(&alpha) {
            return f64::INFINITY;
        }
        let n = self.params.n as f64;
        let slack = 1.0 - 2.0 * n * self.x * alpha.tan();
        if !(slack > 0.0) {
            return f64::INFINITY;
        }
        self.x * self.params.d_omega / (alpha.cos() * slack)
    }

    /// `(ζ − D0) / (D(Ω) + 2NK sin α)`.
    pub fn tbar(&self, coupling: f64, alpha: f64) -> f64 {
        (self.params.zeta - self.params.d0) / self.spread_rate(coupling, alpha)
    }

    /// Upper bounds on the layer entry times `t_k`, `k = 0..=d`. Infinite
    /// when the denominator is not positive.
    pub fn tk_bounds(&self, coupling: f64, alpha: f64) -> Vec<f64> {
        let fp = &self.params;
        let gain = coupling * alpha.cos() / fp.c * fp.beta.powi(fp.d as i32 + 1) * fp.dinf
            / fp.layer_ratio().powi(fp.d as i32);
        let denom = gain - self.spread_rate(coupling, alpha);
        (0..=fp.d)
            .map(|k| if denom > 0.0 { (k + 1) as f64 * fp.zeta / denom } else { f64::INFINITY })
            .collect()
    }

    /// Direct evaluation of both admissibility lines.
    pub fn conditions(&self, coupling: f64, alpha: f64) -> ConditionValues {
        let fp = &self.params;
        let n = fp.n as f64;
        let tan_bound = 1.0 / (2.0 * n * self.x);
        let coupling_lhs =
            self.x * (fp.d_omega / (coupling * alpha.cos()) + 2.0 * n * alpha.sin() / alpha.cos());
        let coupling_lhs = if coupling_lhs.is_nan() { f64::INFINITY } else { coupling_lhs };
        let tan_alpha = alpha.tan();
        let satisfied = alpha >= 0.0
            && tan_alpha < tan_bound
            && fp.dinf + alpha < PI / 2.0
            && coupling_lhs < 1.0;
        ConditionValues { tan_alpha, tan_bound, dinf_plus_alpha: fp.dinf + alpha, coupling_lhs, satisfied }
    }

    pub fn operating_point(&self, coupling: f64, alpha: f64) -> OperatingPoint {
        OperatingPoint {
            alpha,
            coupling,
            k_min: self.k_min(alpha),
            tbar: self.tbar(coupling, alpha),
            tk_bounds: self.tk_bounds(coupling, alpha),
            targets: self.params.layer_targets(),
            conditions: self.conditions(coupling, alpha),
        }
    }
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, value: f64, bound: f64) -> Self {
        Self { name: name.into(), pass, value, bound }
    }

    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value <= bound, value, bound)
    }
}

/// Hypotheses of the synchronization estimate for a given run.
pub fn precondition_checks(
    region: &AdmissibleRegion,
    params: &SystemParams,
    decomp: &NodeDecomposition,
) -> Vec<Check> {
    let fp = &region.params;
    let (k, a) = (params.coupling, params.frustration);
    vec![
        Check::new("initial_diameter", fp.d0 < PI, fp.d0, PI),
        Check::new("frustration", a < region.alpha_max, a, region.alpha_max),
        Check::new("coupling", k > 0.0 && k >= region.k_min(a), k, region.k_min(a)),
        Check::new(
            "layers",
            decomp.num_layers() == fp.d + 1 && decomp.num_vertices() == fp.n,
            decomp.num_layers() as f64,
            (fp.d + 1) as f64,
        ),
    ]
}

/// First sample time from which `values` stay `≤ bound` until the end.
pub fn entry_time(times: &[f64], values: &[f64], bound: f64) -> Option<f64> {
    let mut entry = None;
    for (&t, &v) in times.iter().zip(values) {
        if v <= bound {
            entry.get_or_insert(t);
        } else {
            entry = None;
        }
    }
    entry
}

/// `10·(K·N + D(Ω))·Δt` with `Δt` the widest sample spacing.
pub fn fd_tolerance(traj: &Trajectory) -> f64 {
    let p = &traj.params;
    let dt = traj
        .samples
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .fold(0.0f64, f64::max);
    10.0 * (p.coupling * p.len() as f64 + p.frequency_spread()) * dt
}

/// Largest `D(θ(t)) − D(θ(0)) − (D(Ω) + 2NK sin α)·t` over the samples before
/// `D` first exceeds `zeta`.
pub fn local_growth_excess(traj: &Trajectory, zeta: f64) -> f64 {
    let p = &traj.params;
    let rate = p.frequency_spread() + 2.0 * p.len() as f64 * p.coupling * p.frustration.sin();
    let d0 = traj.samples.first().map_or(0.0, |s| s.diameter);
    traj.samples
        .iter()
        .take_while(|s| s.diameter <= zeta)
        .map(|s| s.diameter - d0 - rate * s.t)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub t_star: Option<f64>,
    pub layer_entry: Vec<Option<f64>>,
    pub operating_point: OperatingPoint,
    pub checks: Vec<Check>,
}

impl TheoremReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn verify_theorem(
    fp: &FrameworkParams,
    region: &AdmissibleRegion,
    traj: &Trajectory,
    decomp: &NodeDecomposition,
) -> Result<TheoremReport> {
    let pre = precondition_checks(region, &traj.params, decomp);
    if let Some(bad) = pre.iter().find(|c| !c.pass) {
        return Err(Error::PreconditionViolated(format!(
            "{}: value {} against bound {}",
            bad.name, bad.value, bad.bound
        )));
    }
    if traj.samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, found: 0 });
    }
    let (k, a) = (traj.params.coupling, traj.params.frustration);
    let op = region.operating_point(k, a);
    let times = traj.times();
    let diam: Vec<f64> = traj.samples.iter().map(|s| s.diameter).collect();
    let mut checks = Vec::new();

    let t_star = entry_time(&times, &diam, fp.dinf);
    let t_star_value = t_star.unwrap_or(f64::INFINITY);
    checks.push(Check::new("entry", t_star.is_some(), t_star_value, traj.t_end()));
    checks.push(Check::at_most("entry_before_tbar", t_star_value, op.tbar));

    let early_max = traj
        .samples
        .iter()
        .filter(|s| s.t < op.tbar)
        .map(|s| s.diameter)
        .fold(0.0f64, f64::max);
    checks.push(Check::new("half_circle", early_max < fp.zeta, early_max, fp.zeta));

    let growth = local_growth_excess(traj, fp.zeta);
    checks.push(Check::at_most("local_growth", growth, fd_tolerance(traj)));

    let mut layer_entry = Vec::with_capacity(fp.d + 1);
    for (layer, (&target, &bound)) in op.targets.iter().zip(&op.tk_bounds).enumerate() {
        let trace: Vec<f64> = traj.samples.iter().map(|s| s.layer_diameters[layer]).collect();
        let entry = entry_time(&times, &trace, target);
        layer_entry.push(entry);
        let value = entry.unwrap_or(f64::INFINITY);
        checks.push(Check::at_most(format!("layer_{layer}_entry"), value, bound));
    }
    Ok(TheoremReport { t_star, layer_entry, operating_point: op, checks })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorResult {
    pub k: usize,
    pub max_residual: f64,
    /// Start of the sample interval with the largest residual.
    pub worst_t: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the forward difference of `Qᵏ` on every sample interval with
/// `D(Ω) + 2NK sin α + (2N+1)K cos α·D_{k−1} − (K cos α / c)·Qᵏ`, taking the
/// largest `D_{k−1}` and smallest `Qᵏ` of the two endpoints.
pub fn monitor_q_inequality(
    traj: &Trajectory,
    decomp: &NodeDecomposition,
    fp: &FrameworkParams,
    k: usize,
) -> Result<MonitorResult> {
    if traj.samples.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, found: traj.samples.len() });
    }
    if k >= decomp.num_layers() || traj.num_layers() != decomp.num_layers() {
        return Err(Error::InvalidConfig(format!(
            "layer {k} is not recorded ({} layers)",
            traj.num_layers()
        )));
    }
    let p = &traj.params;
    let n = fp.n as f64;
    let (kc, ks) = (p.coupling * p.frustration.cos(), p.coupling * p.frustration.sin());
    let base = p.frequency_spread() + 2.0 * n * ks;
    let mut max_residual = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for w in traj.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dq = (b.q[k] - a.q[k]) / (b.t - a.t);
        let below = if k == 0 { 0.0 } else { a.layer_diameters[k - 1].max(b.layer_diameters[k - 1]) };
        let q = a.q[k].min(b.q[k]);
        let rhs = base + (2.0 * n + 1.0) * kc * below - kc / fp.c * q;
        let r = dq - rhs;
        if r > max_residual {
            max_residual = r;
            worst_t = a.t;
        }
    }
    let tolerance = fd_tolerance(traj);
    Ok(MonitorResult { k, max_residual, worst_t, tolerance, pass: max_residual <= tolerance })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub pass: bool,
}

/// Least-squares fit of `log D(ω) ≈ log C1 − C2 (t − t_star)`.
///
/// The window runs from `t_star + 0.1(t_end − t_star)` to the last sample with
/// `D(ω) > 10⁻¹²`.
pub fn fit_frequency_decay(traj: &Trajectory, t_star: f64) -> Result<DecayFit> {
    let t_end = traj.t_end();
    let start = t_star + 0.1 * (t_end - t_star);
    let spread: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.t >= start)
        .map(|s| (s.t, s.frequency_diameter()))
        .collect();
    let Some(last) = spread.iter().rposition(|&(_, w)| w > FREQUENCY_FLOOR) else {
        return Err(Error::DegenerateData(format!(
            "D(ω) ≤ {FREQUENCY_FLOOR:e} after t = {start}; frequencies already locked"
        )));
    };
    let pts: Vec<(f64, f64)> = spread[..=last]
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(t, w)| (t, w.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, found: pts.len() });
    }
    let len = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::DegenerateData("fit window has zero width".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    let c2 = -slope;
    Ok(DecayFit {
        c1: (intercept + slope * t_star).exp(),
        c2,
        r_squared,
        window: (pts[0].0, pts[pts.len() - 1].0),
        points: pts.len(),
        pass: c2 > 0.0 && r_squared >= MIN_R_SQUARED,
    })
}

/// Locked phase difference of a bidirectional pair, `sin δ* = ΔΩ / (2K cos α)`,
/// found by bisection on `[0, π/2]`.
pub fn locked_pair_offset(delta_omega: f64, coupling: f64, alpha: f64) -> Option<f64> {
    let target = delta_omega.abs() / (2.0 * coupling * alpha.cos());
    if !(target <= 1.0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, PI / 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.sin() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
