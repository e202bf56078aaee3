use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use sync_lab::digraph::{has_spanning_tree, maximum_nodes, node_decomposition, Digraph, NodeDecomposition};
use sync_lab::dynamics::diameter;
use sync_lab::framework::{admissible_region, derive_params, Check, ParamOverrides};
use sync_lab::harness::{
    run_scenario_in, run_sweep, sine_chain_falsification, summarize_dir, write_run, Scenario,
    SweepSpec, Verdict,
};
use sync_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "sync-lab", version, about = "Frustrated Kuramoto oscillators on digraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv and report.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the layered node decomposition of a graph.
    Decompose {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Evaluate the sufficient conditions on (K, α) for an instance.
    CheckConditions {
        #[arg(long)]
        graph: PathBuf,
        /// JSON array of natural frequencies.
        #[arg(long)]
        omega: PathBuf,
        /// A number, or `auto` for half the largest admissible value.
        #[arg(long)]
        alpha: String,
        #[arg(long = "K")]
        coupling: Option<f64>,
        #[arg(long)]
        dinf: Option<f64>,
        /// Initial phase diameter.
        #[arg(long, conflicts_with = "theta0", required_unless_present = "theta0")]
        d0: Option<f64>,
        /// JSON array of initial phases, used instead of --d0.
        #[arg(long)]
        theta0: Option<PathBuf>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Randomized search for violations of the sine-chain inequalities.
    CheckSineChain {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-12)]
        slack: f64,
    },
    /// Run every cell of a sweep specification.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a run or sweep output directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((value, ok)) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("json output"));
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parent(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn one_based(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    sets.iter().map(|s| s.iter().map(|v| v + 1).collect()).collect()
}

fn run(command: Command) -> Result<(Value, bool)> {
    match command {
        Command::Simulate { config, out } => {
            let scenario = Scenario::load(&config)?;
            let (traj, report) = run_scenario_in(&scenario, parent(&config))?;
            write_run(&out, &traj, &report)?;
            let ok = report.verdict == Verdict::Pass;
            Ok((
                json!({
                    "verdict": report.verdict,
                    "t_star": report.t_star,
                    "alpha": report.alpha,
                    "K": report.coupling,
                    "t_end": report.t_end,
                    "failed_checks": report.failed_checks(),
                    "out": out,
                }),
                ok,
            ))
        }
        Command::Decompose { graph } => {
            let g = Digraph::load(&graph)?;
            let max_nodes = one_based(&maximum_nodes(&g));
            match node_decomposition(&g) {
                Ok(dec) => Ok((decomposition_json(&g, &dec), true)),
                Err(e @ Error::NoSpanningTree { .. }) => Ok((
                    json!({
                        "n": g.len(),
                        "spanning_tree": false,
                        "maximum_nodes": max_nodes,
                        "error": e.to_string(),
                    }),
                    false,
                )),
                Err(e) => Err(e),
            }
        }
        Command::CheckConditions {
            graph,
            omega,
            alpha,
            coupling,
            dinf,
            d0,
            theta0,
            zeta,
            gamma,
            eta,
        } => {
            let g = Digraph::load(&graph)?;
            let omega = read_vector(&omega)?;
            if omega.len() != g.len() {
                return Err(Error::DimensionMismatch { expected: g.len(), found: omega.len() });
            }
            let d0 = match (d0, theta0) {
                (Some(v), _) => v,
                (None, Some(path)) => diameter(&read_vector(&path)?),
                (None, None) => unreachable!("clap requires one of --d0 and --theta0"),
            };
            let spanning = has_spanning_tree(&g);
            let dec = NodeDecomposition::peel(&g);
            let overrides = ParamOverrides { zeta, gamma, eta, dinf };
            let fp = derive_params(d0, g.len(), dec.d(), diameter(&omega), overrides)?;
            let region = admissible_region(&fp)?;
            let alpha = if alpha.eq_ignore_ascii_case("auto") {
                region.alpha_max / 2.0
            } else {
                alpha
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("--alpha must be a number or auto, got {alpha}")))?
            };
            let k_min = region.k_min(alpha);
            let mut checks = vec![
                Check::new("spanning_tree", spanning, f64::from(u8::from(spanning)), 1.0),
                Check::new("frustration", alpha >= 0.0 && alpha < region.alpha_max, alpha, region.alpha_max),
            ];
            let point = coupling.map(|k| {
                checks.push(Check::new("coupling", k > 0.0 && k >= k_min, k, k_min));
                region.operating_point(k, alpha)
            });
            let ok = checks.iter().all(|c| c.pass);
            Ok((
                json!({
                    "framework": fp,
                    "region": {"alpha_max": region.alpha_max, "x": region.x, "alpha": alpha, "k_min": k_min},
                    "operating_point": point,
                    "checks": checks,
                    "pass": ok,
                }),
                ok,
            ))
        }
        Command::CheckSineChain { samples, n, eta, gamma, seed, slack } => {
            let summary = sine_chain_falsification(n, eta, gamma, samples, seed, slack)?;
            let ok = summary.violations == 0;
            Ok((serde_json::to_value(summary)?, ok))
        }
        Command::Sweep { spec, out } => {
            let sweep = SweepSpec::load(&spec)?;
            let summary = run_sweep(&sweep, &out, parent(&spec))?;
            let ok = summary.tally.all_pass();
            Ok((json!({"tally": summary.tally, "out": out}), ok))
        }
        Command::Report { dir } => {
            let report = summarize_dir(&dir)?;
            let ok = report.tally.all_pass();
            Ok((serde_json::to_value(report)?, ok))
        }
    }
}

fn decomposition_json(g: &Digraph, dec: &NodeDecomposition) -> Value {
    json!({
        "n": g.len(),
        "spanning_tree": true,
        "maximum_nodes": one_based(&maximum_nodes(g)),
        "d": dec.d(),
        "layers": one_based(dec.layers()),
        "sizes": dec.sizes(),
    })
}
