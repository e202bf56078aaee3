//! The frustrated Kuramoto vector field, its second-order lift and the
//! integrators that produce sampled trajectories.
//!
//! Phases live on the real line and are never reduced mod 2π. The integrator
//! advances the phase of vertex 0 together with the offsets `θᵢ − θ₀`; the
//! vector field only sees differences, so this is the same flow, but offsets
//! near zero keep full relative precision. With admissible couplings the
//! synchronized diameters are many orders of magnitude below one ulp of a
//! phase of size one, and every diameter and `Qᵏ` is computed from offsets.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::combo::{classify_case, q_quantity, Case, CoefficientMode, QFunctional};
use crate::digraph::{Digraph, NodeDecomposition};
use crate::error::{Error, Result};

/// Natural frequencies `Ωᵢ`, coupling `K` and frustration `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega: Vec<f64>,
    pub coupling: f64,
    pub frustration: f64,
}

impl SystemParams {
    pub fn new(omega: Vec<f64>, coupling: f64, frustration: f64) -> Result<Self> {
        let p = Self { omega, coupling, frustration };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "coupling must be finite and non-negative, got {}",
                self.coupling
            )));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.frustration) {
            return Err(Error::InvalidConfig(format!(
                "frustration must lie in [0, π/2), got {}",
                self.frustration
            )));
        }
        if self.omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("natural frequencies must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `D(Ω)`.
    pub fn frequency_spread(&self) -> f64 {
        diameter(&self.omega)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Phase velocities `Ωᵢ + K Σ_{j∈𝒩ᵢ} sin(θⱼ − θᵢ + α)`.
pub fn rhs(g: &Digraph, p: &SystemParams, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(g.len(), p.len())?;
    check_len(g.len(), theta.len())?;
    let mut out = vec![0.0; theta.len()];
    rhs_into(g, p, theta, &mut out);
    Ok(out)
}

fn rhs_into(g: &Digraph, p: &SystemParams, theta: &[f64], out: &mut [f64]) {
    for (i, slot) in out.iter_mut().enumerate() {
        let pull: f64 = g
            .neighbors(i)
            .iter()
            .map(|&j| (theta[j] - theta[i] + p.frustration).sin())
            .sum();
        *slot = p.omega[i] + p.coupling * pull;
    }
}

/// `ωᵢ = θ̇ᵢ`; identical to [`rhs`].
pub fn frequency(g: &Digraph, p: &SystemParams, theta: &[f64]) -> Result<Vec<f64>> {
    rhs(g, p, theta)
}

/// `ω̇ᵢ = K Σ_{j∈𝒩ᵢ} cos(θⱼ − θᵢ + α)(ωⱼ − ωᵢ)`.
pub fn rhs_second_order(
    g: &Digraph,
    p: &SystemParams,
    theta: &[f64],
    omega: &[f64],
) -> Result<Vec<f64>> {
    check_len(g.len(), p.len())?;
    check_len(g.len(), theta.len())?;
    check_len(g.len(), omega.len())?;
    Ok((0..g.len())
        .map(|i| {
            p.coupling
                * g.neighbors(i)
                    .iter()
                    .map(|&j| (theta[j] - theta[i] + p.frustration).cos() * (omega[j] - omega[i]))
                    .sum::<f64>()
        })
        .collect())
}

/// `max − min`, 0 for an empty slice.
pub fn diameter(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// `(D(θ), [D₀(θ), …, D_d(θ)])` where `D_k` spans layers `0..=k`.
pub fn diameters(decomp: &NodeDecomposition, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(decomp.num_vertices(), theta.len())?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let per_layer: Vec<f64> = decomp
        .layers()
        .iter()
        .map(|layer| {
            for &v in layer {
                lo = lo.min(theta[v]);
                hi = hi.max(theta[v]);
            }
            hi - lo
        })
        .collect();
    let total = *per_layer.last().expect("at least one layer");
    Ok((total, per_layer))
}

/// Largest recommended RK4 step, `c_step / (K·N + max|Ω| + 1)`.
pub fn max_step(p: &SystemParams, c_step: f64) -> f64 {
    let max_omega = p.omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    c_step / (p.coupling * p.len() as f64 + max_omega + 1.0)
}

pub const DEFAULT_STEP_FACTOR: f64 = 0.1;
pub const DEFAULT_SAMPLES: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Classical RK4; `dt` defaults to [`max_step`] with [`DEFAULT_STEP_FACTOR`].
    Rk4 {
        #[serde(default)]
        dt: Option<f64>,
    },
    /// Dormand–Prince 5(4) with mixed error control.
    DormandPrince {
        atol: f64,
        #[serde(default)]
        rtol: f64,
    },
}

impl Default for Method {
    fn default() -> Self {
        Method::Rk4 { dt: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub method: Method,
    /// Number of recorded samples, endpoints included.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: Method::default(), samples: DEFAULT_SAMPLES }
    }
}

impl SolverConfig {
    pub fn rk4(dt: Option<f64>, samples: usize) -> Self {
        Self { method: Method::Rk4 { dt }, samples }
    }
}

/// What is recorded at every sample besides the phases.
#[derive(Clone, Debug)]
pub struct Observables {
    pub decomposition: NodeDecomposition,
    pub q: QFunctional,
}

impl Observables {
    pub fn new(decomposition: NodeDecomposition, q: QFunctional) -> Self {
        Self { decomposition, q }
    }

    /// Peeled decomposition of `g` with general-mode coefficients.
    pub fn for_graph(g: &Digraph, eta: f64) -> Result<Self> {
        let decomposition = NodeDecomposition::peel(g);
        let q = QFunctional::new(&decomposition, eta, CoefficientMode::General)?;
        Ok(Self { decomposition, q })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    /// `D(θ)`.
    pub diameter: f64,
    /// `D₀(θ), …, D_d(θ)`.
    pub layer_diameters: Vec<f64>,
    /// `Q⁰, …, Q^d`.
    pub q: Vec<f64>,
    /// Position of layer `k+1` against layers `0..=k`, for `k = 0..d`.
    #[serde(skip)]
    pub cases: Vec<Case>,
}

impl Sample {
    /// `D(ω)`.
    pub fn frequency_diameter(&self) -> f64 {
        diameter(&self.omega)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: SystemParams,
    pub samples: Vec<Sample>,
    pub stats: StepStats,
}

/// Integrates from `theta0` over `[0, t_end]`.
pub fn integrate(
    g: &Digraph,
    p: &SystemParams,
    obs: &Observables,
    theta0: &[f64],
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let n = g.len();
    check_len(n, p.len())?;
    check_len(n, theta0.len())?;
    check_len(n, obs.decomposition.num_vertices())?;
    p.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidConfig(format!("t_end must be positive, got {t_end}")));
    }
    if cfg.samples < 2 {
        return Err(Error::InvalidConfig("at least two samples are required".into()));
    }
    if theta0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t: 0.0 });
    }

    let field = OffsetField::new(g, p);
    let mut y = field.encode(theta0);
    let mut stepper = Stepper::new(&cfg.method, p, n)?;
    let mut stats = StepStats { min_dt: f64::INFINITY, ..StepStats::default() };
    let intervals = cfg.samples - 1;
    let mut samples = Vec::with_capacity(cfg.samples);
    samples.push(field.sample(obs, 0.0, &y)?);
    let mut t = 0.0;
    for s in 1..=intervals {
        let target = t_end * s as f64 / intervals as f64;
        stepper.advance(&field, &mut y, t, target, &mut stats)?;
        t = target;
        samples.push(field.sample(obs, t, &y)?);
    }
    if stats.min_dt == f64::INFINITY {
        stats.min_dt = 0.0;
    }
    Ok(Trajectory { params: p.clone(), samples, stats })
}

/// State layout: `y[0] = θ₀`, `y[i] = θᵢ − θ₀`.
struct OffsetField<'a> {
    g: &'a Digraph,
    p: &'a SystemParams,
}

impl<'a> OffsetField<'a> {
    fn new(g: &'a Digraph, p: &'a SystemParams) -> Self {
        Self { g, p }
    }

    fn encode(&self, theta: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = theta.iter().map(|x| x - theta[0]).collect();
        y[0] = theta[0];
        y
    }

    fn offsets(y: &[f64]) -> Vec<f64> {
        let mut rel = y.to_vec();
        rel[0] = 0.0;
        rel
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let rel = Self::offsets(y);
        rhs_into(self.g, self.p, &rel, dy);
        let base = dy[0];
        for v in dy.iter_mut().skip(1) {
            *v -= base;
        }
    }

    fn sample(&self, obs: &Observables, t: f64, y: &[f64]) -> Result<Sample> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        let rel = Self::offsets(y);
        let theta: Vec<f64> = rel.iter().map(|r| y[0] + r).collect();
        let mut omega = vec![0.0; y.len()];
        rhs_into(self.g, self.p, &rel, &mut omega);
        let (diameter, layer_diameters) = diameters(&obs.decomposition, &rel)?;
        let values = q_quantity(&obs.decomposition, &obs.q, &rel)?;
        let cases = (0..obs.decomposition.d())
            .filter_map(|k| classify_case(&values, k))
            .collect();
        Ok(Sample { t, theta, omega, diameter, layer_diameters, q: values.q, cases })
    }
}

enum Stepper {
    Rk4 { dt: f64, k: [Vec<f64>; 4], tmp: Vec<f64> },
    Dopri { atol: f64, rtol: f64, h: f64, k: [Vec<f64>; 7], tmp: Vec<f64>, y5: Vec<f64> },
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus embedded 4th-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Stepper {
    fn new(method: &Method, p: &SystemParams, n: usize) -> Result<Self> {
        let default_dt = max_step(p, DEFAULT_STEP_FACTOR);
        match *method {
            Method::Rk4 { dt } => {
                let dt = dt.unwrap_or(default_dt);
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(Error::InvalidConfig(format!("step must be positive, got {dt}")));
                }
                Ok(Stepper::Rk4 {
                    dt,
                    k: std::array::from_fn(|_| vec![0.0; n]),
                    tmp: vec![0.0; n],
                })
            }
            Method::DormandPrince { atol, rtol } => {
                if !(atol > 0.0) || !(rtol >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "tolerances must satisfy atol > 0, rtol ≥ 0 (got {atol}, {rtol})"
                    )));
                }
                Ok(Stepper::Dopri {
                    atol,
                    rtol,
                    h: default_dt,
                    k: std::array::from_fn(|_| vec![0.0; n]),
                    tmp: vec![0.0; n],
                    y5: vec![0.0; n],
                })
            }
        }
    }

    fn advance(
        &mut self,
        f: &OffsetField<'_>,
        y: &mut [f64],
        t0: f64,
        t1: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        match self {
            Stepper::Rk4 { dt, k, tmp } => {
                let span = t1 - t0;
                let steps = (span / *dt).ceil().max(1.0) as usize;
                let h = span / steps as f64;
                for s in 0..steps {
                    rk4_step(f, y, h, k, tmp);
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite { t: t0 + h * (s + 1) as f64 });
                    }
                }
                stats.accepted += steps;
                stats.min_dt = stats.min_dt.min(h);
                stats.max_dt = stats.max_dt.max(h);
                Ok(())
            }
            Stepper::Dopri { atol, rtol, h, k, tmp, y5 } => {
                let mut t = t0;
                while t < t1 {
                    let remaining = t1 - t;
                    let last = *h >= remaining;
                    let step = if last { remaining } else { *h };
                    let err = dopri_step(f, y, step, k, tmp, y5, *atol, *rtol);
                    if !err.is_finite() {
                        return Err(Error::NonFinite { t });
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if err <= 1.0 {
                        y.copy_from_slice(y5);
                        t = if last { t1 } else { t + step };
                        stats.accepted += 1;
                        stats.min_dt = stats.min_dt.min(step);
                        stats.max_dt = stats.max_dt.max(step);
                        if !last || factor < 1.0 {
                            *h = step * factor;
                        }
                    } else {
                        stats.rejected += 1;
                        *h = step * factor;
                        if *h <= f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
                            return Err(Error::NonFinite { t });
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

fn rk4_step(f: &OffsetField<'_>, y: &mut [f64], h: f64, k: &mut [Vec<f64>; 4], tmp: &mut [f64]) {
    let n = y.len();
    f.eval(y, &mut k[0]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k[0][i];
    }
    f.eval(tmp, &mut k[1]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k[1][i];
    }
    f.eval(tmp, &mut k[2]);
    for i in 0..n {
        tmp[i] = y[i] + h * k[2][i];
    }
    f.eval(tmp, &mut k[3]);
    for i in 0..n {
        y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// One trial step; the 5th-order result lands in `y5`. Returns the scaled
/// RMS error estimate.
#[allow(clippy::too_many_arguments)]
fn dopri_step(
    f: &OffsetField<'_>,
    y: &[f64],
    h: f64,
    k: &mut [Vec<f64>; 7],
    tmp: &mut [f64],
    y5: &mut [f64],
    atol: f64,
    rtol: f64,
) -> f64 {
    let n = y.len();
    f.eval(y, &mut k[0]);
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (r, a) in DP_A[s].iter().enumerate().take(s) {
                acc += a * k[r][i];
            }
            tmp[i] = y[i] + h * acc;
        }
        debug_assert!(DP_C[s] > 0.0);
        let (head, tail) = k.split_at_mut(s);
        let _ = head;
        f.eval(tmp, &mut tail[0]);
    }
    // Stage 7 is evaluated at the 5th-order solution (FSAL), so tmp == y5.
    y5.copy_from_slice(tmp);
    let mut sum = 0.0;
    for i in 0..n {
        let e: f64 = h * (0..7).map(|s| DP_E[s] * k[s][i]).sum::<f64>();
        let scale = atol + rtol * y[i].abs().max(y5[i].abs());
        sum += (e / scale).powi(2);
    }
    (sum / n as f64).sqrt()
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.params.len()
    }

    pub fn num_layers(&self) -> usize {
        self.samples.first().map_or(0, |s| s.q.len())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    pub fn csv_header(&self) -> String {
        csv_header(self.n(), self.num_layers())
    }

    /// Writes `t,theta_1..,omega_1..,D,D_0..,Q_0..` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for s in &self.samples {
            let fields = std::iter::once(s.t)
                .chain(s.theta.iter().copied())
                .chain(s.omega.iter().copied())
                .chain(std::iter::once(s.diameter))
                .chain(s.layer_diameters.iter().copied())
                .chain(s.q.iter().copied())
                .map(fmt17)
                .collect::<Vec<_>>();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a trajectory written by [`Trajectory::write_csv`]. The CSV does
    /// not carry `K`, `α` or `Ω`, so they are supplied by the caller. Case
    /// labels are not stored and come back empty.
    pub fn read_csv<R: BufRead>(r: R, params: SystemParams) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Csv("empty file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let n = cols.iter().filter(|c| c.starts_with("theta_")).count();
        let layers = cols.iter().filter(|c| c.starts_with("Q_")).count();
        if n == 0 || layers == 0 || header != csv_header(n, layers) {
            return Err(Error::Csv(format!("unexpected header: {header}")));
        }
        check_len(n, params.len())?;
        let width = 2 + 2 * n + 2 * layers;
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Csv(format!("row {}: {e}", row + 1)))?;
            if vals.len() != width {
                return Err(Error::Csv(format!(
                    "row {} has {} fields, expected {width}",
                    row + 1,
                    vals.len()
                )));
            }
            let (t, rest) = vals.split_first().expect("non-empty row");
            let (theta, rest) = rest.split_at(n);
            let (omega, rest) = rest.split_at(n);
            let (d, rest) = rest.split_first().expect("diameter column");
            let (dk, q) = rest.split_at(layers);
            samples.push(Sample {
                t: *t,
                theta: theta.to_vec(),
                omega: omega.to_vec(),
                diameter: *d,
                layer_diameters: dk.to_vec(),
                q: q.to_vec(),
                cases: Vec::new(),
            });
        }
        Ok(Self { params, samples, stats: StepStats::default() })
    }
}

pub fn csv_header(n: usize, layers: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("theta_{i}")));
    cols.extend((1..=n).map(|i| format!("omega_{i}")));
    cols.push("D".into());
    cols.extend((0..layers).map(|k| format!("D_{k}")));
    cols.extend((0..layers).map(|k| format!("Q_{k}")));
    cols.join(",")
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
