use std::path::Path;
use std::process::Command;

use mps_sliding::harness::{
    build_setup, emit_outputs, plot_data, run_experiment, GeometryChoice, ModeSpec, NoiseKind, ProblemSpec, RunConfig,
    PLOT_FILE, SUMMARY_FILE, TRACE_FILE,
};
use mps_sliding::network::{NetworkModel, NetworkSpec, Topology};
use mps_sliding::penalty::{build_penalized_vi, OracleModel};
use mps_sliding::problems::io::write_instance;
use mps_sliding::problems::{matching_pennies, random_matrix_game, Instance};
use mps_sliding::solver::{deterministic_outer_iterations, mps_run, RunTrace, SlidingSchedule};
use mps_sliding::{Dgf, PenaltyCoefficients};

fn config(problem: ProblemSpec, topology: Topology, m: usize, epsilon: f64, mode: ModeSpec) -> RunConfig {
    RunConfig {
        schema_version: 1,
        epsilon,
        seed: 0,
        n_override: None,
        geometry: GeometryChoice::Euclidean,
        timing: false,
        out: None,
        problem,
        network: NetworkSpec { topology, m },
        mode,
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn single_node_harness_matches_a_centralized_run() {
    let cfg = config(ProblemSpec::MatchingPennies { seed: 4 }, Topology::Complete, 1, 0.05, ModeSpec::Deterministic);
    let exp = run_experiment(&cfg).unwrap();
    assert_eq!(exp.report.communication_rounds, 0);

    let game = matching_pennies(1).unwrap();
    let net = NetworkModel::single_node();
    let vi = build_penalized_vi(
        game.spp().clone(),
        &net,
        &net,
        PenaltyCoefficients::none(0.05),
        OracleModel::Bounded { l0: exp.setup.l0 },
        Dgf::SquaredEuclidean,
    )
    .unwrap();
    let ls = vi.schedule_smoothness();
    let n = deterministic_outer_iterations(ls, exp.setup.omega_sq, 0.05).unwrap();
    assert_eq!(n, exp.report.n);
    let schedule = SlidingSchedule::deterministic(ls, vi.constants().m, n).unwrap();
    let (z_bar, trace) = mps_run(&vi, &schedule, &exp.setup.z0).unwrap();
    assert_eq!(z_bar, exp.final_point);
    assert_eq!(trace.h_calls, exp.report.h_calls_per_node);
}

#[test]
fn outputs_are_reproducible_and_complete() {
    let mut cfg = config(ProblemSpec::MatchingPennies { seed: 1 }, Topology::Ring, 4, 0.05, ModeSpec::Deterministic);
    cfg.n_override = Some(25);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let exp = run_experiment(&cfg).unwrap();
        emit_outputs(&exp.report, &exp.trace, d).unwrap();
    }
    for name in [TRACE_FILE, SUMMARY_FILE, PLOT_FILE] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let csv = String::from_utf8(read(&a, TRACE_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 25 + 1);
    let plot = String::from_utf8(read(&a, PLOT_FILE)).unwrap();
    assert_eq!(plot.lines().count(), 25 + 1);
    let summary: toml::Value = toml::from_str(&String::from_utf8(read(&a, SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["n"].as_integer(), Some(25));
    assert_eq!(summary["wall_ms"].as_float(), Some(0.0));
}

#[test]
fn empty_trace_writes_only_headers() {
    let trace = RunTrace::new();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    assert_eq!(plot_data(&trace).lines().count(), 1);
}

#[test]
fn zero_noise_reproduces_the_deterministic_files() {
    let mut det = config(ProblemSpec::MatchingPennies { seed: 1 }, Topology::Ring, 4, 0.05, ModeSpec::Deterministic);
    det.n_override = Some(12);
    let mut sto = det.clone();
    sto.mode = ModeSpec::Stochastic {
        sigma: 0.0,
        noise: NoiseKind::Uniform,
        p: 0.25,
    };
    let dir = tempfile::tempdir().unwrap();
    for (cfg, sub) in [(&det, "det"), (&sto, "sto")] {
        let exp = run_experiment(cfg).unwrap();
        assert_eq!(exp.report.effective_mode, "deterministic");
        emit_outputs(&exp.report, &exp.trace, &dir.path().join(sub)).unwrap();
    }
    for name in [TRACE_FILE, SUMMARY_FILE, PLOT_FILE] {
        assert_eq!(read(&dir.path().join("det"), name), read(&dir.path().join("sto"), name));
    }
}

#[test]
fn complete_graph_run_meets_its_targets() {
    let cfg = config(ProblemSpec::MatchingPennies { seed: 2 }, Topology::Complete, 3, 0.05, ModeSpec::Deterministic);
    let r = run_experiment(&cfg).unwrap().report;
    assert!(r.final_gap.unwrap() <= r.epsilon, "{r:?}");
    assert!(r.penalized_gap.unwrap() <= r.predicted.gap_bound);
    assert!(r.consensus_x <= r.consensus_bound_x.unwrap());
    assert!(r.consensus_y <= r.consensus_bound_y.unwrap());
    assert_eq!(r.communication_rounds, r.n as u64);
    assert!(r.h_calls_per_node as f64 <= r.predicted.h_calls_per_node);
}

#[test]
fn file_instances_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::MatrixGame(random_matrix_game(2, 2, 3, 8).unwrap());
    write_instance(&inst, &dir.path().join("game.toml")).unwrap();
    let mut cfg = config(
        ProblemSpec::File {
            path: "game.toml".into(),
            seed: 1,
        },
        Topology::Path,
        2,
        0.1,
        ModeSpec::Deterministic,
    );
    cfg.n_override = Some(5);
    let path = dir.path().join("run.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let loaded = RunConfig::load(&path).unwrap();
    let setup = build_setup(&loaded).unwrap();
    assert_eq!(setup.instance.spp().dim(), 2 * (2 + 3));
    assert_eq!(run_experiment(&loaded).unwrap().report.n, 5);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mps-sliding")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\nepsilon = -1\n").unwrap();
    assert_eq!(cli(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(cli(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    let mut cfg = config(ProblemSpec::MatchingPennies { seed: 1 }, Topology::Ring, 4, 0.05, ModeSpec::Deterministic);
    cfg.n_override = Some(6);
    let good = dir.path().join("good.toml");
    std::fs::write(&good, cfg.to_toml().unwrap()).unwrap();
    let out = dir.path().join("out");
    let run = cli(&["run", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join(TRACE_FILE).exists());

    let cert = cli(&["certify", "--config", good.to_str().unwrap(), "--triples", "200"]);
    assert_eq!(cert.status.code(), Some(0));
    let broken = cli(&[
        "certify",
        "--config",
        good.to_str().unwrap(),
        "--triples",
        "200",
        "--oracle-m",
        "0",
        "--oracle-delta",
        "0",
    ]);
    assert_eq!(broken.status.code(), Some(3));

    let spec = cli(&["spectrum", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(spec.status.code(), Some(0));
    assert!(out.join("W_tilde.csv").exists() && out.join("W.csv").exists());
}
