//! Ordered convex combinations of layer phases and the functionals `Qᵏ`.
//!
//! For each layer the phases are sorted ascending, `θ₁ ≤ … ≤ θ_{N_k}`, and two
//! chains of barycenters are built: an upper chain that starts at the largest
//! phase and absorbs the lower phases one at a time with weights `1/(āₗ+1)`,
//! and a lower chain that starts at the smallest phase and absorbs the larger
//! ones with weights `1/(a̲ₗ+1)`. The coefficients grow like falling
//! factorials in `η`, so the chains stay close to the layer extremes:
//! `β·D_k ≤ Qᵏ ≤ D_k` with `β = 1 − 2/η`.

use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::digraph::{Digraph, NodeDecomposition};
use crate::error::{Error, Result};

/// Which population size enters the coefficient recursion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// A single strongly connected ensemble: the layer size `N₀` plays the
    /// role of the total population.
    StronglyConnected,
    /// Layer of a hierarchical decomposition: the total `N` is used.
    #[default]
    General,
}

/// Falling factorial `A(n, j) = n!/(n−j)!`.
pub fn falling_factorial(n: u64, j: u64) -> Result<u128> {
    if j > n {
        return Err(Error::InvalidConfig(format!("A({n}, {j}) needs j ≤ n")));
    }
    (n - j + 1..=n).try_fold(1u128, |acc, f| {
        acc.checked_mul(f as u128)
            .ok_or_else(|| Error::Overflow(format!("A({n}, {j}) exceeds 128 bits")))
    })
}

fn falling_factorial_f64(n: usize, j: usize) -> f64 {
    (n + 1 - j..=n).map(|f| f as f64).product()
}

/// `Σ_{j=1}^{m} ηʲ A(n, j)`, evaluated as a Horner-style product so that large
/// `η` does not require forming `ηʲ` separately.
pub fn permutation_sum(n: usize, m: usize, eta: f64) -> f64 {
    let mut total = 0.0;
    let mut term = 1.0;
    for j in 1..=m {
        term *= eta * (n + 1 - j) as f64;
        total += term;
    }
    total
}

/// Coefficients `ā_l`, `a̲_l` (`l = 1..=N_k`) of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboCoefficients {
    layer_size: usize,
    total: usize,
    eta: f64,
    mode: CoefficientMode,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl ComboCoefficients {
    /// Builds the coefficients by recursion and checks them against the
    /// falling-factorial closed form.
    pub fn new(total: usize, layer_size: usize, eta: f64, mode: CoefficientMode) -> Result<Self> {
        if !(eta > 1.0) || !eta.is_finite() {
            return Err(Error::InvalidConfig(format!("eta must be finite and > 1, got {eta}")));
        }
        if layer_size == 0 || layer_size > total {
            return Err(Error::InvalidConfig(format!(
                "layer size {layer_size} must lie in 1..={total}"
            )));
        }
        let (upper, lower) = recursion(effective_total(total, layer_size, mode), layer_size, eta);
        let out = Self { layer_size, total, eta, mode, upper, lower };
        for l in 1..=layer_size {
            let checks = [
                (out.upper[l - 1], out.closed_form_upper(l)),
                (out.lower[l - 1], out.closed_form_lower(l)),
            ];
            for (rec, closed) in checks {
                if !rec.is_finite() || !closed.is_finite() {
                    return Err(Error::Overflow(format!(
                        "coefficients for N={total}, N_k={layer_size}, eta={eta} are not finite"
                    )));
                }
                if (rec - closed).abs() > 1e-12 * rec.abs().max(closed.abs()) {
                    return Err(Error::Overflow(format!(
                        "recursion {rec} and closed form {closed} disagree at l={l}"
                    )));
                }
            }
        }
        Ok(out)
    }

    pub fn layer_size(&self) -> usize {
        self.layer_size
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> CoefficientMode {
        self.mode
    }

    /// `ā_1, …, ā_{N_k}`.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `a̲_1, …, a̲_{N_k}`.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// `ā_l = Σ_{j=1}^{N_k−l} ηʲ A(2M−l+1, j)` with `M` the effective total.
    pub fn closed_form_upper(&self, l: usize) -> f64 {
        let m = effective_total(self.total, self.layer_size, self.mode);
        closed_form(2 * m + 1 - l, self.layer_size - l, self.eta)
    }

    /// `a̲_l = Σ_{j=1}^{l−1} ηʲ A(l+2M−N_k, j)`.
    pub fn closed_form_lower(&self, l: usize) -> f64 {
        let m = effective_total(self.total, self.layer_size, self.mode);
        closed_form(l + 2 * m - self.layer_size, l - 1, self.eta)
    }
}

fn effective_total(total: usize, layer_size: usize, mode: CoefficientMode) -> usize {
    match mode {
        CoefficientMode::StronglyConnected => layer_size,
        CoefficientMode::General => total,
    }
}

fn recursion(m: usize, nk: usize, eta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut upper = vec![0.0; nk];
    for l in (2..=nk).rev() {
        upper[l - 2] = eta * (2 * m + 2 - l) as f64 * (upper[l - 1] + 1.0);
    }
    let mut lower = vec![0.0; nk];
    for l in 1..nk {
        lower[l] = eta * (l + 1 + 2 * m - nk) as f64 * (lower[l - 1] + 1.0);
    }
    (upper, lower)
}

fn closed_form(n: usize, terms: usize, eta: f64) -> f64 {
    (1..=terms)
        .map(|j| eta.powi(j as i32) * falling_factorial_f64(n, j))
        .sum()
}

/// Exact rational evaluation of the recursion for the binary value of `eta`.
/// Returns `(ā, a̲)`.
pub fn exact_coefficients(
    total: usize,
    layer_size: usize,
    eta: f64,
    mode: CoefficientMode,
) -> Result<(Vec<BigRational>, Vec<BigRational>)> {
    let eta_q = BigRational::from_float(eta)
        .ok_or_else(|| Error::InvalidConfig(format!("eta {eta} is not finite")))?;
    let m = effective_total(total, layer_size, mode);
    let nk = layer_size;
    let int = |v: usize| BigRational::from_integer(v.into());
    let mut upper = vec![BigRational::zero(); nk];
    for l in (2..=nk).rev() {
        upper[l - 2] = &eta_q * int(2 * m + 2 - l) * (&upper[l - 1] + BigRational::one());
    }
    let mut lower = vec![BigRational::zero(); nk];
    for l in 1..nk {
        lower[l] = &eta_q * int(l + 1 + 2 * m - nk) * (&lower[l - 1] + BigRational::one());
    }
    Ok((upper, lower))
}

/// Vertices of `layer` sorted by phase, ties broken by vertex index.
pub fn order_layer(theta: &[f64], layer: &[usize]) -> Vec<usize> {
    let mut out = layer.to_vec();
    out.sort_by(|&a, &b| {
        theta[a]
            .partial_cmp(&theta[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    out
}

/// Upper chain `θ̄_l` and lower chain `θ̲_l`, `l = 1..=N_k`, of sorted phases.
#[derive(Clone, Debug, PartialEq)]
pub struct Barycenters {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

pub fn barycenters(coeffs: &ComboCoefficients, sorted: &[f64]) -> Result<Barycenters> {
    let nk = coeffs.layer_size();
    if sorted.len() != nk {
        return Err(Error::DimensionMismatch { expected: nk, found: sorted.len() });
    }
    let mut upper = vec![0.0; nk];
    upper[nk - 1] = sorted[nk - 1];
    for l in (1..nk).rev() {
        // (ā θ̄_{l+1} + θ_l)/(ā+1), written as a step towards θ_l.
        let prev = upper[l];
        upper[l - 1] = prev + (sorted[l - 1] - prev) / (coeffs.upper[l - 1] + 1.0);
    }
    let mut lower = vec![0.0; nk];
    lower[0] = sorted[0];
    for l in 1..nk {
        let prev = lower[l - 1];
        lower[l] = prev + (sorted[l] - prev) / (coeffs.lower[l] + 1.0);
    }
    Ok(Barycenters { upper, lower })
}

/// Coefficients for every layer of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFunctional {
    eta: f64,
    mode: CoefficientMode,
    layers: Vec<ComboCoefficients>,
}

impl QFunctional {
    pub fn new(decomp: &NodeDecomposition, eta: f64, mode: CoefficientMode) -> Result<Self> {
        let n = decomp.num_vertices();
        let layers = decomp
            .sizes()
            .into_iter()
            .map(|nk| ComboCoefficients::new(n, nk, eta, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eta, mode, layers })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> CoefficientMode {
        self.mode
    }

    pub fn coefficients(&self, k: usize) -> &ComboCoefficients {
        &self.layers[k]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Per-layer extremes `θ̄_k = θ̄^k_1`, `θ̲_k = θ̲^k_{N_k}` and
/// `Qᵏ = max_{i≤k} θ̄_i − min_{i≤k} θ̲_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct QValues {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub q: Vec<f64>,
}

pub fn q_quantity(decomp: &NodeDecomposition, qf: &QFunctional, theta: &[f64]) -> Result<QValues> {
    let n = decomp.num_vertices();
    if theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: theta.len() });
    }
    if qf.num_layers() != decomp.num_layers() {
        return Err(Error::DimensionMismatch {
            expected: decomp.num_layers(),
            found: qf.num_layers(),
        });
    }
    let layers = decomp.num_layers();
    let mut upper = Vec::with_capacity(layers);
    let mut lower = Vec::with_capacity(layers);
    let mut q = Vec::with_capacity(layers);
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for (k, layer) in decomp.layers().iter().enumerate() {
        let sorted: Vec<f64> = order_layer(theta, layer).iter().map(|&v| theta[v]).collect();
        let b = barycenters(qf.coefficients(k), &sorted)?;
        let (u, l) = (b.upper[0], b.lower[layer.len() - 1]);
        hi = hi.max(u);
        lo = lo.min(l);
        upper.push(u);
        lower.push(l);
        q.push(hi - lo);
    }
    Ok(QValues { upper, lower, q })
}

/// Relative position of layer `k+1` with respect to layers `0..=k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Both extremes come from the earlier layers.
    One = 1,
    /// Layer `k+1` carries both the running max and the running min.
    Two = 2,
    /// Layer `k+1` carries the running max only.
    Three = 3,
    /// Layer `k+1` carries the running min only.
    Four = 4,
}

impl Case {
    pub fn number(self) -> u8 {
        self as u8
    }
}

/// Classifies layer `k+1` against layers `0..=k`; `None` when `k+1` is not a
/// layer. Equal extremes may be attributed either way; the lowest admissible
/// case number is returned.
pub fn classify_case(values: &QValues, k: usize) -> Option<Case> {
    let next = k + 1;
    if next >= values.upper.len() {
        return None;
    }
    let max_old = values.upper[..=k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_old = values.lower[..=k].iter().copied().fold(f64::INFINITY, f64::min);
    let (u, l) = (values.upper[next], values.lower[next]);
    // For each extreme, the attributions consistent with the data.
    let max_opts: &[bool] = match u.partial_cmp(&max_old) {
        Some(Ordering::Greater) => &[true],
        Some(Ordering::Equal) => &[false, true],
        _ => &[false],
    };
    let min_opts: &[bool] = match l.partial_cmp(&min_old) {
        Some(Ordering::Less) => &[true],
        Some(Ordering::Equal) => &[false, true],
        _ => &[false],
    };
    max_opts
        .iter()
        .flat_map(|&mx| min_opts.iter().map(move |&mn| case_of(mx, mn)))
        .min()
}

fn case_of(max_new: bool, min_new: bool) -> Case {
    match (max_new, min_new) {
        (false, false) => Case::One,
        (true, true) => Case::Two,
        (true, false) => Case::Three,
        (false, true) => Case::Four,
    }
}

/// Which of the two sine-chain inequalities failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSide {
    /// `Σ_{i≥n} η^{i−n} min_{j≤i} sin(θⱼ−θᵢ) ≤ sin(θ_{k̄ₙ} − θ_{N₀})`.
    Upper,
    /// `Σ_{i≤n} η^{n−i} max_{j≥i} sin(θⱼ−θᵢ) ≥ sin(θ_{k̲ₙ} − θ₁)`.
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineChainWitness {
    pub side: ChainSide,
    /// 1-based position in the sorted order.
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineChainOutcome {
    pub holds: bool,
    pub witness: Option<SineChainWitness>,
}

/// Checks both sine-chain inequalities for a strongly connected layer.
///
/// `sorted` holds the layer phases in ascending order and `neighbors[i]` the
/// in-layer neighbours of position `i`, as 0-based positions. An empty
/// `min`/`max` contributes 0. Violations are reported only beyond `slack`.
pub fn sine_chain_check(
    sorted: &[f64],
    neighbors: &[Vec<usize>],
    eta: f64,
    gamma: f64,
    slack: f64,
) -> Result<SineChainOutcome> {
    let n0 = sorted.len();
    if neighbors.len() != n0 {
        return Err(Error::DimensionMismatch { expected: n0, found: neighbors.len() });
    }
    if n0 == 0 {
        return Ok(SineChainOutcome { holds: true, witness: None });
    }
    if sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::PreconditionViolated("phases are not sorted".into()));
    }
    let diameter = sorted[n0 - 1] - sorted[0];
    if !(diameter < gamma) {
        return Err(Error::PreconditionViolated(format!(
            "layer diameter {diameter} is not below gamma {gamma}"
        )));
    }
    if !(eta * gamma.sin() > 1.0) {
        return Err(Error::PreconditionViolated(format!(
            "eta {eta} must exceed 1/sin(gamma) = {}",
            1.0 / gamma.sin()
        )));
    }

    let below: Vec<f64> = (0..n0)
        .map(|i| {
            neighbors[i]
                .iter()
                .filter(|&&j| j <= i)
                .map(|&j| (sorted[j] - sorted[i]).sin())
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))))
                .unwrap_or(0.0)
        })
        .collect();
    let above: Vec<f64> = (0..n0)
        .map(|i| {
            neighbors[i]
                .iter()
                .filter(|&&j| j >= i)
                .map(|&j| (sorted[j] - sorted[i]).sin())
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
                .unwrap_or(0.0)
        })
        .collect();

    // Upper side, n from N₀ down to 1: lhs_n = below_n + η·lhs_{n+1}.
    let mut lhs = 0.0;
    let mut lowest: Option<usize> = None;
    for n in (0..n0).rev() {
        lhs = below[n] + eta * lhs;
        lowest = neighbors[n].iter().copied().chain(lowest).min();
        if let Some(kb) = lowest {
            let rhs = (sorted[kb] - sorted[n0 - 1]).sin();
            if lhs > rhs + slack {
                return Ok(violation(ChainSide::Upper, n, lhs, rhs));
            }
        }
    }

    // Lower side, n from 1 up to N₀: lhs_n = above_n + η·lhs_{n−1}.
    let mut lhs = 0.0;
    let mut highest: Option<usize> = None;
    for n in 0..n0 {
        lhs = above[n] + eta * lhs;
        highest = neighbors[n].iter().copied().chain(highest).max();
        if let Some(kb) = highest {
            let rhs = (sorted[kb] - sorted[0]).sin();
            if lhs < rhs - slack {
                return Ok(violation(ChainSide::Lower, n, lhs, rhs));
            }
        }
    }
    Ok(SineChainOutcome { holds: true, witness: None })
}

fn violation(side: ChainSide, n: usize, lhs: f64, rhs: f64) -> SineChainOutcome {
    SineChainOutcome {
        holds: false,
        witness: Some(SineChainWitness { side, n: n + 1, lhs, rhs }),
    }
}

/// [`sine_chain_check`] for the layer `layer` of `g` at phases `theta`.
pub fn sine_chain_check_layer(
    g: &Digraph,
    layer: &[usize],
    theta: &[f64],
    eta: f64,
    gamma: f64,
    slack: f64,
) -> Result<SineChainOutcome> {
    let order = order_layer(theta, layer);
    let mut position = vec![usize::MAX; g.len()];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }
    let sorted: Vec<f64> = order.iter().map(|&v| theta[v]).collect();
    let neighbors: Vec<Vec<usize>> = order
        .iter()
        .map(|&v| {
            g.neighbors(v)
                .iter()
                .filter(|&&j| position[j] != usize::MAX)
                .map(|&j| position[j])
                .collect()
        })
        .collect();
    sine_chain_check(&sorted, &neighbors, eta, gamma, slack)
}
