use std::fs;

use serde_json::json;
use sync_lab::digraph::{node_decomposition, Digraph, GraphFile};
use sync_lab::harness::{run_scenario, run_scenario_in, run_sweep, DecayOutcome, RowStatus, Scenario, SweepSpec, Verdict};
use tempfile::TempDir;

fn scenario(graph: serde_json::Value, omega: serde_json::Value) -> Scenario {
    let text = json!({
        "graph": graph,
        "omega": omega,
        "theta0": {"arc_width": 2.5},
        "t_end": {"coupling_units": 100},
        "solver": {"method": "rk4", "samples": 512},
        "seed": 3
    });
    Scenario::from_json(&text.to_string()).unwrap()
}

#[test]
fn layered_chain_synchronizes_under_auto_parameters() {
    let s = scenario(json!({"n": 3, "arcs": [[1, 2], [2, 1], [2, 3]]}), json!({"uniform": [-0.5, 0.5]}));
    let (traj, report) = run_scenario(&s).unwrap();
    assert_eq!(report.layers, vec![vec![0, 1], vec![2]]);
    assert_eq!(report.verdict, Verdict::Pass, "{:?}", report.failed_checks());
    let theorem = report.theorem.as_ref().unwrap();
    assert_eq!(theorem.layer_entry.len(), 2);
    assert!(report.t_star.unwrap() < theorem.operating_point.tbar);
    assert!(report.monitors.iter().all(|m| m.max_residual <= m.tolerance));
    assert!(matches!(report.decay, DecayOutcome::Fitted { .. } | DecayOutcome::Locked { .. }));
    assert!(traj.last().diameter < std::f64::consts::FRAC_PI_2);
}

#[test]
fn graph_file_resolves_relative_to_config() {
    let dir = TempDir::new().unwrap();
    let g = Digraph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
    fs::write(dir.path().join("tri.json"), serde_json::to_string(&g.to_file()).unwrap()).unwrap();
    let s = scenario(json!("tri.json"), json!({"identical": 0.25}));
    let (_, report) = run_scenario_in(&s, Some(dir.path())).unwrap();
    assert_eq!(report.n, 3);
    assert_eq!(report.layers.len(), 1);
    assert_eq!(report.verdict, Verdict::Pass, "{:?}", report.failed_checks());
}

#[test]
fn disconnected_graph_is_a_precondition_failure() {
    let s = scenario(json!({"n": 4, "arcs": [[1, 2], [2, 1], [3, 4], [4, 3]]}), json!([0.0, 0.0, 0.1, 0.1]));
    let s = Scenario { coupling: sync_lab::harness::Setting::Value(1.0), ..s };
    let (_, report) = run_scenario(&s).unwrap();
    assert!(!report.spanning_tree);
    assert_eq!(report.verdict, Verdict::PreconditionUnmet);
    assert!(report.theorem.is_none());
}

#[test]
fn single_cell_sweep_matches_direct_run() {
    let dir = TempDir::new().unwrap();
    let base = json!({
        "graph": {"family": "path", "n": 3},
        "omega": [0.1, -0.2, 0.0],
        "theta0": [0.0, 0.7, 1.4],
        "t_end": {"coupling_units": 80},
        "solver": {"method": "rk4", "samples": 200}
    });
    let spec = SweepSpec { base: base.clone(), axes: vec![], threads: Some(1) };
    let summary = run_sweep(&spec, dir.path(), None).unwrap();
    assert_eq!(summary.rows.len(), 1);
    let row = &summary.rows[0];
    assert_eq!(row.status, RowStatus::Pass);

    let (traj, report) = run_scenario(&Scenario::from_json(&base.to_string()).unwrap()).unwrap();
    assert_eq!(row.t_star, report.t_star);
    assert_eq!(row.coupling, Some(report.coupling));
    let stored = fs::read_to_string(dir.path().join("runs").join(format!("{}.csv", row.hash))).unwrap();
    assert_eq!(stored, traj.to_csv_string());
}

#[test]
fn graph_file_round_trip_keeps_decomposition() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("g.json");
    fs::write(&path, r#"{"n": 5, "arcs": [[1, 2], [2, 3], [3, 1], [3, 4], [4, 5], [5, 4]]}"#).unwrap();
    let g = Digraph::load(&path).unwrap();
    let file: GraphFile = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(file.n, 5);
    let dec = node_decomposition(&g).unwrap();
    assert_eq!(dec.layers(), &[vec![0, 1, 2], vec![3, 4]]);
    assert_eq!(dec.prefix_sums(), vec![3, 5]);
}
