//! End-to-end acceptance checks. Run with
//! `cargo test -p sync-lab --test acceptance -- --nocapture`; each criterion
//! prints one PASS/FAIL line and the process exits non-zero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sync_lab::combo::{
    exact_coefficients, order_layer, sine_chain_check_layer, CoefficientMode, ComboCoefficients,
    QFunctional,
};
use sync_lab::digraph::{has_spanning_tree, maximum_nodes, node_decomposition, Digraph, NodeDecomposition};
use sync_lab::dynamics::{diameter, integrate, Observables, SolverConfig, SystemParams, Trajectory};
use sync_lab::framework::{
    derive_params, fd_tolerance, fit_frequency_decay, local_growth_excess, locked_pair_offset,
    ParamOverrides,
};
use sync_lab::harness::{
    random_digraph, random_spanning_tree_digraph, run_scenario, run_sweep, sine_chain_instance,
    sine_chain_falsification, DecayOutcome, RunReport, Scenario, SweepSpec, Verdict,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- graphs

/// Reachability closure by Floyd–Warshall; `reach[a][b]` means a path a → b.
fn closure(g: &Digraph) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut r = vec![vec![false; n]; n];
    for (a, row) in r.iter_mut().enumerate() {
        row[a] = true;
    }
    for (s, t) in g.arcs() {
        r[s][t] = true;
    }
    for k in 0..n {
        for a in 0..n {
            if r[a][k] {
                for b in 0..n {
                    if r[k][b] {
                        r[a][b] = true;
                    }
                }
            }
        }
    }
    r
}

/// Source components of the condensation, each sorted, ordered by first vertex.
fn brute_sources(g: &Digraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let r = closure(g);
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&u| r[v][u] && r[u][v]).collect();
        for &u in &comp {
            seen[u] = true;
        }
        let entered = (0..n).any(|u| !comp.contains(&u) && comp.iter().any(|&w| r[u][w]));
        if !entered {
            out.push(comp);
        }
    }
    out
}

fn brute_spanning_tree(g: &Digraph) -> bool {
    closure(g).iter().any(|row| row.iter().all(|&x| x))
}

fn graph_mismatch(g: &Digraph) -> Option<String> {
    let mut got = maximum_nodes(g);
    got.sort();
    let mut want = brute_sources(g);
    want.sort();
    if got != want {
        return Some(format!("maximum nodes {got:?} vs {want:?}"));
    }
    let st = has_spanning_tree(g);
    if st != brute_spanning_tree(g) || st != (want.len() == 1) {
        return Some(format!("spanning tree {st} with {} sources", want.len()));
    }
    if st {
        match node_decomposition(g) {
            Ok(dec) => dec.validate(g).err().map(|e| format!("decomposition: {e}")),
            Err(e) => Some(format!("decomposition refused: {e}")),
        }
    } else {
        node_decomposition(g).is_ok().then(|| "decomposition accepted a forest".into())
    }
}

fn criterion_graphs() -> Outcome {
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for n in 1..=3usize {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).filter(|(s, t)| s != t).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let arcs = pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &a)| a);
            let g = Digraph::new(n, arcs).unwrap();
            checked += 1;
            if let Some(m) = graph_mismatch(&g) {
                failures.push(m);
            }
        }
    }
    let exhaustive = checked;
    let random: Vec<Option<String>> = (0..10_000u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=6);
            let p = rng.gen_range(0.0..0.6);
            let g = if seed % 2 == 0 {
                random_digraph(n, p, seed).unwrap()
            } else {
                random_spanning_tree_digraph(n, p * 0.5, seed).unwrap()
            };
            graph_mismatch(&g)
        })
        .collect();
    checked += random.len();
    failures.extend(random.into_iter().flatten());
    outcome(
        failures.is_empty(),
        format!(
            "{checked} digraphs ({exhaustive} exhaustive), {} mismatches{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------- coefficients

fn falling(n: usize, j: usize) -> BigRational {
    (n + 1 - j..=n).fold(BigRational::one(), |acc, f| acc * BigRational::from_integer(f.into()))
}

/// Closed forms in exact arithmetic: `ā_l = Σ_{j=1}^{N_k−l} ηʲ A(2M−l+1, j)`,
/// `a̲_l = Σ_{j=1}^{l−1} ηʲ A(l+2M−N_k, j)`.
fn closed_forms(m: usize, nk: usize, eta: &BigRational) -> (Vec<BigRational>, Vec<BigRational>) {
    let sum = |n: usize, terms: usize| {
        let mut total = BigRational::zero();
        let mut power = BigRational::one();
        for j in 1..=terms {
            power = &power * eta;
            total += &power * falling(n, j);
        }
        total
    };
    let upper = (1..=nk).map(|l| sum(2 * m + 1 - l, nk - l)).collect();
    let lower = (1..=nk).map(|l| sum(l + 2 * m - nk, l - 1)).collect();
    (upper, lower)
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1) - x
    }
}

fn criterion_coefficients() -> Outcome {
    let mut cases = 0;
    let mut failures = Vec::new();
    for eta in [2.5f64, 3.0, 10.0] {
        let eta_q = BigRational::from_float(eta).unwrap();
        let integer = eta.fract() == 0.0;
        for total in 1..=8usize {
            for nk in 1..=total {
                for mode in [CoefficientMode::General, CoefficientMode::StronglyConnected] {
                    cases += 1;
                    let m = if mode == CoefficientMode::General { total } else { nk };
                    let (cu, cl) = closed_forms(m, nk, &eta_q);
                    let (ru, rl) = exact_coefficients(total, nk, eta, mode).unwrap();
                    if ru != cu || rl != cl {
                        failures.push(format!("exact recursion ≠ closed form at N={total} N_k={nk} η={eta}"));
                    }
                    let co = ComboCoefficients::new(total, nk, eta, mode).unwrap();
                    for i in 1..=nk {
                        if cu[nk - i] != cl[i - 1] || co.upper()[nk - i] != co.lower()[i - 1] {
                            failures.push(format!("symmetry at N={total} N_k={nk} η={eta} i={i}"));
                        }
                        for (got, exact) in [(co.upper()[i - 1], &cu[i - 1]), (co.lower()[i - 1], &cl[i - 1])] {
                            let e = exact.to_f64().unwrap();
                            let ok = if integer {
                                BigRational::from_float(got).unwrap() == *exact
                            } else {
                                (got - e).abs() <= ulp(e)
                            };
                            if !ok {
                                failures.push(format!("N={total} N_k={nk} η={eta} l={i}: {got} vs {e}"));
                            }
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{cases} (N, N_k, η, mode) cells, {} discrepancies{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

// ------------------------------------------------------------ sine chain

/// Direct evaluation of both sine-chain inequalities; `Some` on violation.
fn naive_sine_chain(g: &Digraph, theta: &[f64], eta: f64, slack: f64) -> Option<String> {
    let n0 = g.len();
    let everyone: Vec<usize> = (0..n0).collect();
    let order = order_layer(theta, &everyone);
    let mut pos = vec![0; n0];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    let th: Vec<f64> = order.iter().map(|&v| theta[v]).collect();
    let nb: Vec<Vec<usize>> = order.iter().map(|&v| g.neighbors(v).iter().map(|&j| pos[j]).collect()).collect();
    let extreme = |i: usize, below: bool| -> f64 {
        let vals = nb[i]
            .iter()
            .filter(|&&j| if below { j <= i } else { j >= i })
            .map(|&j| (th[j] - th[i]).sin());
        if below {
            vals.fold(None, |a: Option<f64>, s| Some(a.map_or(s, |a| a.min(s)))).unwrap_or(0.0)
        } else {
            vals.fold(None, |a: Option<f64>, s| Some(a.map_or(s, |a| a.max(s)))).unwrap_or(0.0)
        }
    };
    for n in 0..n0 {
        let lhs: f64 = (n..n0).map(|i| eta.powi((i - n) as i32) * extreme(i, true)).sum();
        if let Some(kb) = (n..n0).flat_map(|i| nb[i].iter().copied()).min() {
            let rhs = (th[kb] - th[n0 - 1]).sin();
            if lhs > rhs + slack {
                return Some(format!("upper n={} lhs={lhs} rhs={rhs}", n + 1));
            }
        }
        let lhs: f64 = (0..=n).map(|i| eta.powi((n - i) as i32) * extreme(i, false)).sum();
        if let Some(kb) = (0..=n).flat_map(|i| nb[i].iter().copied()).max() {
            let rhs = (th[kb] - th[0]).sin();
            if lhs < rhs - slack {
                return Some(format!("lower n={} lhs={lhs} rhs={rhs}", n + 1));
            }
        }
    }
    None
}

fn criterion_sine_chain() -> Outcome {
    const SAMPLES: u64 = 100_000;
    const SLACK: f64 = 1e-12;
    let mut cells = Vec::new();
    for n in 1..=5usize {
        for gamma in [1.0, PI / 2.0, 2.5, 3.0] {
            for eta in [1.01 / f64::sin(gamma), 3.0, 10.0] {
                if eta * gamma.sin() > 1.0 {
                    cells.push((n, gamma, eta));
                }
            }
        }
    }
    let mut failures = Vec::new();
    let mut total = 0u64;
    for (ci, &(n, gamma, eta)) in cells.iter().enumerate() {
        let seed = 1000 + ci as u64;
        let naive: Vec<String> = (0..SAMPLES)
            .into_par_iter()
            .filter_map(|i| {
                let (g, theta) = sine_chain_instance(n, gamma, seed, i).unwrap();
                let fast = sine_chain_check_layer(&g, &(0..n).collect::<Vec<_>>(), &theta, eta, gamma, SLACK)
                    .unwrap();
                match (naive_sine_chain(&g, &theta, eta, SLACK), fast.holds) {
                    (None, true) => None,
                    (Some(v), _) => Some(format!("N₀={n} γ={gamma:.3} η={eta:.3} sample {i}: {v}")),
                    (None, false) => Some(format!("N₀={n} sample {i}: checker disagrees with direct evaluation")),
                }
            })
            .collect();
        let summary = sine_chain_falsification(n, eta, gamma, SAMPLES, seed, SLACK).unwrap();
        if summary.violations != 0 {
            failures.push(format!("N₀={n} γ={gamma:.3} η={eta:.3}: {} violations", summary.violations));
        }
        failures.extend(naive);
        total += SAMPLES;
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} cells × {SAMPLES} configurations ({total} total), {} violations{}",
            cells.len(),
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

// ----------------------------------------------------- trajectory suites

struct Run {
    label: String,
    traj: Trajectory,
    beta: f64,
    zeta: f64,
}

/// Random spanning-tree instances with arbitrary `(K, α)`.
fn random_runs() -> &'static Vec<Run> {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..120u64)
            .into_par_iter()
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(0xACCE + seed);
                let n = rng.gen_range(2..=6);
                let g = random_spanning_tree_digraph(n, rng.gen_range(0.0..0.5), seed).unwrap();
                let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let start = rng.gen_range(0.0..2.0 * PI);
                let theta0: Vec<f64> = (0..n).map(|_| start + rng.gen_range(0.0..0.9 * PI)).collect();
                let k = rng.gen_range(0.0..5.0);
                let alpha = rng.gen_range(0.0..1.2);
                let dec = NodeDecomposition::peel(&g);
                let fp = derive_params(diameter(&theta0), n, dec.d(), diameter(&omega), ParamOverrides::default())
                    .unwrap();
                let obs = Observables::new(dec.clone(), QFunctional::new(&dec, fp.eta, CoefficientMode::General).unwrap());
                let p = SystemParams::new(omega, k, alpha).unwrap();
                let traj = integrate(&g, &p, &obs, &theta0, 20.0, &SolverConfig::rk4(None, 201)).unwrap();
                Run { label: format!("random seed {seed} N={n} K={k:.3} α={alpha:.3}"), traj, beta: fp.beta, zeta: fp.zeta }
            })
            .collect()
    })
}

struct Admissible {
    label: String,
    seconds: f64,
    traj: Trajectory,
    report: RunReport,
}

fn admissible_graphs() -> Vec<(&'static str, usize, Vec<[usize; 2]>)> {
    vec![
        ("pair", 2, vec![[1, 2], [2, 1]]),
        ("leader-follower", 2, vec![[1, 2]]),
        ("triangle", 3, vec![[1, 2], [2, 1], [2, 3], [3, 2], [1, 3], [3, 1]]),
        ("3-cycle", 3, vec![[1, 2], [2, 3], [3, 1]]),
        ("core+tail", 3, vec![[1, 2], [2, 1], [2, 3]]),
        ("3-path", 3, vec![[1, 2], [2, 3]]),
        ("3-star", 3, vec![[1, 2], [1, 3]]),
        ("4-cycle", 4, vec![[1, 2], [2, 3], [3, 4], [4, 1]]),
        ("two pairs", 4, vec![[1, 2], [2, 1], [2, 3], [3, 4], [4, 3]]),
        ("3-cycle+tail", 4, vec![[1, 2], [2, 3], [3, 1], [3, 4]]),
        ("root+pair+tail", 4, vec![[1, 2], [2, 3], [3, 2], [3, 4]]),
    ]
}

fn admissible_runs() -> &'static Vec<Admissible> {
    static RUNS: OnceLock<Vec<Admissible>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut specs = Vec::new();
        for (i, (name, n, arcs)) in admissible_graphs().into_iter().enumerate() {
            for alpha in ["0.0", "\"auto\""] {
                let json = format!(
                    r#"{{"graph": {{"n": {n}, "arcs": {arcs:?}}},
                        "omega": {{"uniform": [-0.5, 0.5]}},
                        "theta0": {{"arc_width": 2.5}},
                        "alpha": {alpha}, "K": "auto", "safety": 1.1,
                        "t_end": {{"coupling_units": 100}},
                        "solver": {{"method": "rk4", "samples": 512}},
                        "seed": {seed}}}"#,
                    seed = 7 + i
                );
                specs.push((format!("{name} α={}", if alpha == "0.0" { "0" } else { "α_max/2" }), json));
            }
        }
        specs
            .into_par_iter()
            .map(|(label, json)| {
                let s = Scenario::from_json(&json).unwrap();
                let t = Instant::now();
                let (traj, report) = run_scenario(&s).unwrap();
                Admissible { label, seconds: t.elapsed().as_secs_f64(), traj, report }
            })
            .collect()
    })
}

fn criterion_sandwich() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut samples = 0usize;
    let extra: Vec<(&str, &Trajectory, f64)> =
        admissible_runs().iter().map(|a| (a.label.as_str(), &a.traj, a.report.framework.beta)).collect();
    let runs = random_runs().iter().map(|r| (r.label.as_str(), &r.traj, r.beta)).chain(extra);
    let mut count = 0;
    for (label, traj, beta) in runs {
        count += 1;
        for s in &traj.samples {
            for (&q, &dk) in s.q.iter().zip(&s.layer_diameters) {
                samples += 1;
                let excess = (beta * dk - q).max(q - dk);
                worst = worst.max(excess);
                if excess > 1e-10 {
                    failures.push(format!("{label} t={}: Q={q} D_k={dk}", s.t));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && count >= 100,
        format!(
            "{count} trajectories, {samples} (sample, layer) pairs, worst excess {worst:.3e}, {} violations{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_local_growth() -> Outcome {
    let mut failures = Vec::new();
    for r in random_runs() {
        let excess = local_growth_excess(&r.traj, r.zeta);
        let tol = fd_tolerance(&r.traj);
        if excess > tol {
            failures.push(format!("{}: excess {excess:.3e} > {tol:.3e}", r.label));
        }
    }
    for a in admissible_runs() {
        let excess = local_growth_excess(&a.traj, a.report.framework.zeta);
        let tol = fd_tolerance(&a.traj);
        if excess > tol {
            failures.push(format!("{}: excess {excess:.3e} > {tol:.3e}", a.label));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} trajectories, {} violations{}",
            random_runs().len() + admissible_runs().len(),
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn coverage() -> String {
    let runs = admissible_runs();
    let mut ns: Vec<usize> = runs.iter().map(|a| a.report.n).collect();
    let mut ds: Vec<usize> = runs.iter().map(|a| a.report.layers.len() - 1).collect();
    ns.sort();
    ns.dedup();
    ds.sort();
    ds.dedup();
    let slowest = runs.iter().map(|a| a.seconds).fold(0.0, f64::max);
    format!("{} scenarios, N ∈ {ns:?}, d ∈ {ds:?}, slowest run {slowest:.2}s", runs.len())
}

fn criterion_monitor() -> Outcome {
    let mut failures = Vec::new();
    let mut monitored = 0;
    for a in admissible_runs() {
        if a.report.verdict == Verdict::PreconditionUnmet {
            failures.push(format!("{}: preconditions unmet", a.label));
        }
        if a.report.monitors.len() != a.report.layers.len() {
            failures.push(format!("{}: {} monitors for {} layers", a.label, a.report.monitors.len(), a.report.layers.len()));
        }
        for m in &a.report.monitors {
            monitored += 1;
            if !m.pass {
                failures.push(format!("{} k={}: residual {:.3e} > {:.3e} at t={:.3e}", a.label, m.k, m.max_residual, m.tolerance, m.worst_t));
            }
        }
    }
    let runs = admissible_runs();
    outcome(
        failures.is_empty() && runs.len() >= 20 && runs.iter().all(|a| a.seconds < 60.0),
        format!(
            "{}; {monitored} layer monitors, {} failures{}",
            coverage(),
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_theorem() -> Outcome {
    let mut failures = Vec::new();
    for a in admissible_runs() {
        match &a.report.theorem {
            Some(t) => {
                for c in t.checks.iter().filter(|c| !c.pass) {
                    failures.push(format!("{}: {} value {:.3e} bound {:.3e}", a.label, c.name, c.value, c.bound));
                }
            }
            None => failures.push(format!("{}: no verification report", a.label)),
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{}; {} failed checks{}",
            coverage(),
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_decay() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_r2 = f64::INFINITY;
    let mut locked = 0;
    let mut pair_rates = Vec::new();
    for a in admissible_runs() {
        match &a.report.decay {
            DecayOutcome::Fitted(f) => {
                worst_r2 = worst_r2.min(f.r_squared);
                if !f.pass {
                    failures.push(format!("{}: C2={:.3e} r²={:.4}", a.label, f.c2, f.r_squared));
                }
                if a.label.starts_with("pair ") {
                    let p = &a.traj.params;
                    let dw = (p.omega[1] - p.omega[0]).abs();
                    let delta = locked_pair_offset(dw, p.coupling, p.frustration).unwrap();
                    let rate = 2.0 * p.coupling * p.frustration.cos() * delta.cos();
                    pair_rates.push(f.c2 / rate);
                }
            }
            DecayOutcome::Locked { .. } => locked += 1,
            DecayOutcome::Unavailable { reason } => failures.push(format!("{}: {reason}", a.label)),
        }
    }
    // A pair far from the admissible coupling, where cos δ* is well away from 1.
    let g = Digraph::complete(2).unwrap();
    let (k, alpha, dw) = (1.0, 0.2, 1.2);
    let p = SystemParams::new(vec![0.0, dw], k, alpha).unwrap();
    let obs = Observables::for_graph(&g, 3.0).unwrap();
    let traj = integrate(&g, &p, &obs, &[0.0, 0.3], 40.0, &SolverConfig::rk4(Some(1e-3), 401)).unwrap();
    let delta = locked_pair_offset(dw, k, alpha).unwrap();
    let rate = 2.0 * k * alpha.cos() * delta.cos();
    match fit_frequency_decay(&traj, 0.0) {
        Ok(f) => pair_rates.push(f.c2 / rate),
        Err(e) => failures.push(format!("moderate pair: {e}")),
    }
    for &r in &pair_rates {
        if (r - 1.0).abs() > 0.1 {
            failures.push(format!("pair rate ratio {r:.4}"));
        }
    }
    outcome(
        failures.is_empty() && locked == 0 && pair_rates.len() >= 3,
        format!(
            "{} fits, worst r² {worst_r2:.4}, {locked} already locked, pair C2/(2K cos α cos δ*) = {}{}",
            admissible_runs().len() - locked,
            pair_rates.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", "),
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_determinism() -> Outcome {
    let mut failures = Vec::new();
    let json = r#"{"graph": {"random": {"n": 6, "extra_arc_prob": 0.2}},
                   "omega": {"uniform": [-1, 1]}, "t_end": {"coupling_units": 60},
                   "solver": {"method": "rk4", "samples": 300}, "seed": 99}"#;
    let s = Scenario::from_json(json).unwrap();
    let (a, _) = run_scenario(&s).unwrap();
    let (b, _) = run_scenario(&s).unwrap();
    let text = a.to_csv_string();
    if text != b.to_csv_string() {
        failures.push("same seed gave different CSV".to_string());
    }
    let back = Trajectory::read_csv(text.as_bytes(), a.params.clone()).unwrap();
    let bits = |t: &Trajectory| -> Vec<u64> {
        t.samples
            .iter()
            .flat_map(|s| {
                std::iter::once(s.t)
                    .chain(s.theta.iter().copied())
                    .chain(s.omega.iter().copied())
                    .chain(std::iter::once(s.diameter))
                    .chain(s.layer_diameters.iter().copied())
                    .chain(s.q.iter().copied())
                    .map(f64::to_bits)
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    if bits(&back) != bits(&a) {
        failures.push("CSV reload differs from memory".to_string());
    }
    for r in random_runs().iter().take(20) {
        let back = Trajectory::read_csv(r.traj.to_csv_string().as_bytes(), r.traj.params.clone()).unwrap();
        if bits(&back) != bits(&r.traj) {
            failures.push(format!("{}: CSV reload differs", r.label));
        }
    }
    for a in admissible_runs() {
        let back = Trajectory::read_csv(a.traj.to_csv_string().as_bytes(), a.traj.params.clone()).unwrap();
        if bits(&back) != bits(&a.traj) {
            failures.push(format!("{}: CSV reload differs", a.label));
        }
    }

    let sweep: SweepSpec = serde_json::from_str(&format!(
        r#"{{"base": {json}, "axes": [{{"path": "seed", "values": [1, 2, 3, 4]}},
                                      {{"path": "alpha", "values": [0.0, "auto", 1.0]}}]}}"#
    ))
    .unwrap();
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip([1usize, 4]) {
        let mut spec = sweep.clone();
        spec.threads = Some(threads);
        run_sweep(&spec, dir.path(), None).unwrap();
    }
    let read = |d: &tempfile::TempDir, name: &str| std::fs::read(d.path().join(name)).unwrap();
    for name in ["summary.csv", "summary.json"] {
        if read(&dirs[0], name) != read(&dirs[1], name) {
            failures.push(format!("{name} depends on thread count"));
        }
    }
    let mut files: Vec<_> = std::fs::read_dir(dirs[0].path().join("runs")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    for f in &files {
        let p = std::path::Path::new("runs").join(f);
        if std::fs::read(dirs[0].path().join(&p)).unwrap() != std::fs::read(dirs[1].path().join(&p)).unwrap() {
            failures.push(format!("{} depends on thread count", p.display()));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} round-trips, {} sweep files compared across 1 and 4 threads, {} problems{}",
            2 + 20 + admissible_runs().len(),
            files.len() + 2,
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("graph oracle", criterion_graphs),
        ("coefficient identity", criterion_coefficients),
        ("sandwich", criterion_sandwich),
        ("sine chain", criterion_sine_chain),
        ("local growth", criterion_local_growth),
        ("Q monitor", criterion_monitor),
        ("entry into D∞", criterion_theorem),
        ("frequency decay", criterion_decay),
        ("determinism", criterion_determinism),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {} {:<21} {} [{:.1}s] {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
