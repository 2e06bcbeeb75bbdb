//! End-to-end acceptance checks, one test per shipped guarantee. Each
//! prints a single measured PASS line (visible with --nocapture, and on
//! any failure); the test name carries the criterion number.

use plumetrace_core::fem::{l2_difference, OperatorSet};
use plumetrace_core::lasso::{self, LassoProblem};
use plumetrace_core::mesh::{classify_boundary, Mesh};
use plumetrace_core::sensing::{BumpParams, ObservationOperator};
use plumetrace_core::sparse::Csr;
use plumetrace_core::transport::{SourceField, SpaceTimeField, TimeGrid, TransportSolver};
use plumetrace_core::wind::WindField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

// ---------------------------------------------------------------- helpers

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_plume-trace"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "plume-trace {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("report.json")).expect("report.json");
    serde_json::from_str(&text).expect("valid json")
}

/// True source trajectory of the two desk scenarios: a straight drift
/// from (0.25, 0.50) at t = 0 to (0.45, 0.62) at t = 1.
fn desk_truth(t: f64) -> [f64; 2] {
    [0.25 + 0.2 * t, 0.5 + 0.12 * t]
}

/// Largest distance from a reported atom to the trajectory point at the
/// atom's release time.
fn worst_atom_distance(report: &Value) -> f64 {
    let atoms = report["atoms"].as_array().expect("atoms array");
    let mut worst = 0.0f64;
    for atom in atoms {
        let t = atom["t"].as_f64().unwrap();
        assert!(
            (0.0..=1.0).contains(&t),
            "atom at t = {t} outside the release window"
        );
        let p = desk_truth(t);
        let dx = atom["x"].as_f64().unwrap() - p[0];
        let dy = atom["y"].as_f64().unwrap() - p[1];
        worst = worst.max(dx.hypot(dy));
    }
    worst
}

fn objective_history(report: &Value) -> Vec<f64> {
    report["history"]
        .as_array()
        .expect("history array")
        .iter()
        .map(|e| e["objective"].as_f64().unwrap())
        .collect()
}

fn assert_monotone(label: &str, objectives: &[f64]) {
    for (i, pair) in objectives.windows(2).enumerate() {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-12) + f64::MIN_POSITIVE,
            "{label}: objective rose at iteration {}: {} -> {}",
            i + 1,
            pair[0],
            pair[1]
        );
    }
}

/// Nodal scalar values of a legacy-format VTK file.
fn read_vtk_values(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|_| panic!("{}", path.display()));
    let mut values = Vec::new();
    let mut reading = false;
    for line in text.lines() {
        if line.starts_with("LOOKUP_TABLE") {
            reading = true;
            continue;
        }
        if reading {
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().expect("float"));
            }
        }
    }
    values
}

fn mass_weighted_l2(mass: &Csr, diff: &[f64]) -> f64 {
    let md = mass.matvec(diff);
    diff.iter().zip(&md).map(|(a, b)| a * b).sum::<f64>().sqrt()
}

// --------------------------------------------------------------- criteria

/// Still air on the unit square: every step must conserve the injected
/// mass exactly (weighted sums of the march obey the per-step budget).
#[test]
fn criterion_01_forward_mass_balance() {
    let start = Instant::now();
    let wind = WindField::still();
    let mut mesh = Mesh::generate_rect(1.0, 1.0, 32, 32).unwrap();
    classify_boundary(&mut mesh, &wind, None).unwrap();
    let ops = OperatorSet::assemble(&mesh, &wind, 1.0e-3).unwrap();
    let mass = ops.mass.clone();
    let dt = 0.01;
    let n_steps = 100;
    let solver = TransportSolver::new(ops, dt).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut source = SourceField::zeros(mesh.n_nodes(), n_steps);
    for n in 0..n_steps {
        let vals: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random_range(0.0..1.0)).collect();
        source.set_step(n, vals);
    }
    let states = solver.solve_forward(&source, n_steps).unwrap();

    let weighted_total = |v: &[f64]| mass.matvec(v).iter().sum::<f64>();
    let mut worst = 0.0f64;
    for n in 0..n_steps {
        let before = weighted_total(states.state(n));
        let after = weighted_total(states.state(n + 1));
        let injected = dt * weighted_total(source.step(n).unwrap());
        let scale = after.abs().max(1.0);
        worst = worst.max((after - before - injected).abs() / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-10, "mass-balance relative error {worst:.3e} > 1e-10");
    assert!(secs < 5.0, "took {secs:.1} s (limit 5 s)");
    println!("criterion 01 PASS: mass-balance rel error {worst:.3e} (<= 1e-10), {secs:.2} s");
}

/// Pure diffusion against the exact spreading Gaussian: the L2 error
/// must shrink close to 4x per mesh halving.
#[test]
fn criterion_02_spatial_convergence() {
    const SPREAD0: f64 = 0.075;
    const KAPPA: f64 = 3.0e-3;
    const FINAL_TIME: f64 = 0.1;
    let exact = |t: f64, p: [f64; 2]| {
        let var = SPREAD0 * SPREAD0 + 2.0 * KAPPA * t;
        let r2 = (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2);
        SPREAD0 * SPREAD0 / var * (-r2 / (2.0 * var)).exp()
    };
    let final_error = |n: usize, n_steps: usize| {
        let wind = WindField::still();
        let mut mesh = Mesh::generate_rect(1.0, 1.0, n, n).unwrap();
        classify_boundary(&mut mesh, &wind, None).unwrap();
        let ops = OperatorSet::assemble(&mesh, &wind, KAPPA).unwrap();
        let dt = FINAL_TIME / n_steps as f64;
        let solver = TransportSolver::new(ops, dt).unwrap();
        let init: Vec<f64> = mesh.nodes().iter().map(|&p| exact(0.0, p) / dt).collect();
        let mut source = SourceField::zeros(mesh.n_nodes(), n_steps);
        source.set_step(0, init);
        let u = solver.solve_forward(&source, n_steps).unwrap();
        l2_difference(&mesh, u.final_state(), |p| exact(FINAL_TIME, p))
    };

    let start = Instant::now();
    let e16 = final_error(16, 25);
    let e32 = final_error(32, 100);
    let e64 = final_error(64, 400);
    let (r1, r2) = (e16 / e32, e32 / e64);
    let secs = start.elapsed().as_secs_f64();
    assert!(r1 >= 3.5, "16->32 error ratio {r1:.2} < 3.5");
    assert!(r2 >= 3.5, "32->64 error ratio {r2:.2} < 3.5");
    assert!(secs < 60.0, "took {secs:.1} s (limit 60 s)");
    println!("criterion 02 PASS: convergence ratios {r1:.2}, {r2:.2} (>= 3.5), {secs:.1} s");
}

/// The backward march must be the exact transpose of the forward one:
/// identical system matrices, and the discrete pairing identity on
/// random source/misfit pairs.
#[test]
fn criterion_03_adjoint_exactness() {
    let start = Instant::now();
    let wind = WindField::uniform(0.7, -0.3);
    let mut mesh = Mesh::generate_rect(1.0, 1.0, 16, 16).unwrap();
    classify_boundary(&mut mesh, &wind, None).unwrap();
    let ops = OperatorSet::assemble(&mesh, &wind, 2.0e-3).unwrap();
    let dt = 0.01;
    let n_steps = 20;
    let solver = TransportSolver::new(ops, dt).unwrap();
    let n = mesh.n_nodes();

    // (a) the adjoint system matrix is the entrywise transpose.
    let forward = solver.system_matrix();
    let adjoint = solver.adjoint_system_matrix();
    let pattern = &*forward.pattern;
    for i in 0..pattern.n {
        for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
            let j = pattern.cols[k];
            assert_eq!(
                adjoint.get(i, j).to_bits(),
                forward.get(j, i).to_bits(),
                "adjoint({i},{j}) != forward({j},{i})"
            );
        }
    }

    // (b) pairing identity sum_n <g^n, u^n> = dt sum_n <B~ m^n, p^n>.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut source = SourceField::zeros(n, n_steps);
        for step in 0..n_steps {
            let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            source.set_step(step, vals);
        }
        let mut loads = SpaceTimeField::zeros(dt, n, n_steps + 1);
        for level in 0..=n_steps {
            for v in loads.state_mut(level) {
                *v = rng.random_range(-1.0..1.0);
            }
        }

        let states = solver.solve_forward(&source, n_steps).unwrap();
        let lhs: f64 = (0..=n_steps)
            .map(|k| {
                states
                    .state(k)
                    .iter()
                    .zip(loads.state(k))
                    .map(|(u, g)| u * g)
                    .sum::<f64>()
            })
            .sum();
        let adjoint_states = solver.solve_adjoint(&loads).unwrap();
        let rhs = solver.source_pairing(&source, &adjoint_states);
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-8, "pairing identity relative error {worst:.3e} > 1e-8");
    assert!(secs < 30.0, "took {secs:.1} s (limit 30 s)");
    println!("criterion 03 PASS: transpose exact, pairing rel error {worst:.3e} (<= 1e-8), {secs:.1} s");
}

/// Nonnegative lasso: closed-form scalar cases to machine accuracy, and
/// agreement with a slow projected-gradient oracle on random instances.
#[test]
fn criterion_04_nonnegative_lasso() {
    let start = Instant::now();

    // Closed forms: soft threshold at 1.5, full shrink to 0, clamp at 0.
    let col = vec![vec![1.0]];
    let p = LassoProblem { columns: &col, data: &[2.0], sigma: 1.0, alpha: 0.5 };
    let s = lasso::solve_nn_lasso(&p, None).unwrap();
    assert!((s.weights[0] - 1.5).abs() <= 1e-10, "soft threshold gave {}", s.weights[0]);

    let p = LassoProblem { columns: &col, data: &[0.3], sigma: 1.0, alpha: 0.5 };
    let s = lasso::solve_nn_lasso(&p, None).unwrap();
    assert!(s.weights[0].abs() <= 1e-10, "full shrink gave {}", s.weights[0]);

    let cols = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let p = LassoProblem { columns: &cols, data: &[2.0, -1.0], sigma: 1.0, alpha: 0.0 };
    let s = lasso::solve_nn_lasso(&p, None).unwrap();
    assert!((s.weights[0] - 2.0).abs() <= 1e-10 && s.weights[1].abs() <= 1e-10, "clamp case gave {:?}", s.weights);

    // Random 20x10 instances against a projected-gradient oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for _ in 0..50 {
        let m = 20;
        let k = 10;
        let columns: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let data: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = rng.random_range(0.5..2.0);
        let alpha = rng.random_range(0.01..0.3);
        let problem = LassoProblem { columns: &columns, data: &data, sigma, alpha };

        let solution = lasso::solve_nn_lasso(&problem, None).unwrap();
        assert!(solution.converged, "solver did not converge");
        let oracle = projected_gradient_oracle(&problem);
        let gap = solution
            .weights
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(lasso::kkt_residual(&problem, &solution.weights));
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst_gap <= 1e-8, "oracle disagreement {worst_gap:.3e} > 1e-8");
    assert!(worst_kkt <= 1e-9, "KKT residual {worst_kkt:.3e} > 1e-9");
    assert!(secs < 30.0, "took {secs:.1} s (limit 30 s)");
    println!("criterion 04 PASS: closed forms exact, oracle gap {worst_gap:.3e} (<= 1e-8), KKT {worst_kkt:.3e} (<= 1e-9), {secs:.1} s");
}

/// Plain projected gradient run to a 1e-12 step-change tolerance.
fn projected_gradient_oracle(problem: &LassoProblem) -> Vec<f64> {
    let k = problem.columns.len();
    let m = problem.data.len();
    let inv_var = 1.0 / (problem.sigma * problem.sigma);
    // Lipschitz bound via the Gram matrix's row-sum norm.
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            gram[i * k + j] =
                problem.columns[i].iter().zip(&problem.columns[j]).map(|(a, b)| a * b).sum();
        }
    }
    let lip = (0..k)
        .map(|i| (0..k).map(|j| gram[i * k + j].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        * inv_var;
    let step_size = 1.0 / lip.max(1e-300);

    let mut w = vec![0.0; k];
    for _ in 0..2_000_000 {
        let mut residual = vec![0.0; m];
        for (j, col) in problem.columns.iter().enumerate() {
            for (r, c) in residual.iter_mut().zip(col) {
                *r += w[j] * c;
            }
        }
        for (r, d) in residual.iter_mut().zip(problem.data) {
            *r -= d;
        }
        let mut max_move = 0.0f64;
        for (j, col) in problem.columns.iter().enumerate() {
            let grad =
                inv_var * col.iter().zip(&residual).map(|(a, b)| a * b).sum::<f64>() + problem.alpha;
            let next = (w[j] - step_size * grad).max(0.0);
            max_move = max_move.max((next - w[j]).abs());
            w[j] = next;
        }
        if max_move <= 1e-12 {
            break;
        }
    }
    w
}

/// Dense noiseless desk benchmark via the shipped binary: every atom on
/// the trajectory, small residual, certificate convergence, bounded
/// iterations and runtime.
#[test]
fn criterion_05_dense_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = config_path("desk_dense.toml");
    let config = config.to_str().unwrap();

    run_cli(&["simulate", "--config", config, "--threads", "1", "--out", out]);
    let start = Instant::now();
    run_cli(&["invert", "--config", config, "--threads", "1", "--out", out]);
    let secs = start.elapsed().as_secs_f64();

    let report = read_report(dir.path());
    let h = 1.0 / 32.0;
    let worst = worst_atom_distance(&report);
    let misfit = report["misfit_norm"].as_f64().unwrap() / report["data_norm"].as_f64().unwrap();
    let iterations = report["iterations"].as_u64().unwrap();
    let converged = report["converged"].as_bool().unwrap();
    let alpha = report["alpha"].as_f64().unwrap();
    let last = report["history"].as_array().unwrap().last().unwrap().clone();
    let final_dual = last["max_dual"].as_f64().unwrap();

    assert!(converged, "no dual-certificate convergence");
    assert!(last.get("inserted_step").is_none(), "final iteration still inserted an atom");
    assert!(
        final_dual <= alpha * (1.0 + 1e-3) + 1e-9,
        "final dual {final_dual} exceeds certificate level {}",
        alpha * (1.0 + 1e-3)
    );
    assert!(worst <= 2.0 * h, "atom {worst:.4} from trajectory (> 2h = {})", 2.0 * h);
    assert!(misfit <= 0.02, "residual {misfit:.4} > 2%");
    assert!(iterations <= 100, "{iterations} iterations > 100");
    assert!(secs < 300.0, "inversion took {secs:.1} s single-threaded (limit 300 s)");
    println!(
        "criterion 05 PASS: worst atom offset {:.3}h (<= 2h), residual {:.2}% (<= 2%), {} iterations (<= 100), certificate dual {:.1} <= {:.1}, {:.1} s",
        worst / h, 100.0 * misfit, iterations, final_dual, alpha * (1.0 + 1e-3), secs
    );
}

/// Sparse noisy desk benchmark: ten corridor sensors at SNR 33.3. Atoms
/// stay within 4h of the trajectory and the forecast at the final
/// prediction time matches the true plume to 25% relative L2.
#[test]
fn criterion_06_sparse_noisy_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    // Same scenario, with field output switched on for the comparison.
    let base = std::fs::read_to_string(config_path("desk_sparse.toml")).unwrap();
    let vtk_config = dir.path().join("scenario.toml");
    std::fs::write(&vtk_config, base.replace("vtk = false", "vtk = true")).unwrap();
    let config = vtk_config.to_str().unwrap();

    let start = Instant::now();
    run_cli(&["simulate", "--config", config, "--threads", "1", "--out", out]);
    let truth_final = read_vtk_values(&dir.path().join("concentration_0100.vtk"));

    let invert_dir = dir.path().join("fit");
    let invert_out = invert_dir.to_str().unwrap();
    let measurements = dir.path().join("measurements.csv");
    run_cli(&[
        "invert", "--config", config, "--threads", "1", "--out", invert_out,
        "--measurements", measurements.to_str().unwrap(),
    ]);
    let secs = start.elapsed().as_secs_f64();
    let forecast_final = read_vtk_values(&invert_dir.join("concentration_0100.vtk"));
    assert_eq!(truth_final.len(), forecast_final.len());

    let report = read_report(&invert_dir);
    let h = 1.0 / 32.0;
    let worst = worst_atom_distance(&report);
    assert!(worst <= 4.0 * h, "atom {worst:.4} from trajectory (> 4h = {})", 4.0 * h);

    // Relative L2 of the final-time forecast, in the mesh's L2 inner
    // product (mass-matrix weighted).
    let wind = WindField::still();
    let mut mesh = Mesh::generate_rect(1.0, 1.0, 32, 32).unwrap();
    classify_boundary(&mut mesh, &wind, None).unwrap();
    let mass = OperatorSet::assemble(&mesh, &wind, 1.0).unwrap().mass;
    let diff: Vec<f64> =
        truth_final.iter().zip(&forecast_final).map(|(t, f)| f - t).collect();
    let rel = mass_weighted_l2(&mass, &diff) / mass_weighted_l2(&mass, &truth_final);
    assert!(rel <= 0.25, "forecast relative L2 error {rel:.4} > 25%");
    assert!(secs < 300.0, "took {secs:.1} s (limit 300 s)");
    println!(
        "criterion 06 PASS: worst atom offset {:.3}h (<= 4h), forecast rel L2 {:.1}% (<= 25%), {:.1} s",
        worst / h, 100.0 * rel, secs
    );
}

/// The fitting objective must never rise across iterations, on both
/// desk benchmarks.
#[test]
fn criterion_07_objective_monotonicity() {
    let dir = tempfile::tempdir().unwrap();
    let mut counts = Vec::new();
    for name in ["desk_dense.toml", "desk_sparse.toml"] {
        let out_dir = dir.path().join(name.replace(".toml", ""));
        let out = out_dir.to_str().unwrap();
        let config = config_path(name);
        let config = config.to_str().unwrap();
        run_cli(&["simulate", "--config", config, "--out", out]);
        run_cli(&["invert", "--config", config, "--out", out]);
        let history = objective_history(&read_report(&out_dir));
        assert_monotone(name, &history);
        counts.push(history.len());
    }
    println!(
        "criterion 07 PASS: objective nonincreasing over {} + {} iterations (rel tol 1e-12)",
        counts[0], counts[1]
    );
}

/// Calibration round trip: readings synthesized at kappa = 1e-3 make
/// the sweep pick exactly that grid point with a vanishing score.
#[test]
fn criterion_08_calibration_self_consistency() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = config_path("desk_calibration.toml");
    run_cli(&["calibrate", "--config", config.to_str().unwrap(), "--out", out]);
    let secs = start.elapsed().as_secs_f64();

    let report = read_report(dir.path());
    let best = report["best_kappa"].as_f64().unwrap();
    let best_pi = report["best_pi"].as_f64().unwrap();
    let grid: Vec<f64> =
        report["kappa"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(grid, vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0], "wrong sweep grid");
    assert_eq!(best, 1e-3, "sweep picked kappa = {best}");
    assert!(best_pi <= 1e-20, "score at the true kappa is {best_pi:.3e} > 1e-20");
    assert!(secs < 30.0, "took {secs:.1} s (limit 30 s)");
    println!("criterion 08 PASS: argmin kappa 1e-3, score {best_pi:.1e} (<= 1e-20), {secs:.1} s");
}

/// A sensor immersed in a constant field must read back that constant.
#[test]
fn criterion_09_observation_normalization() {
    let wind = WindField::still();
    let mut mesh = Mesh::generate_rect(1.0, 1.0, 24, 24).unwrap();
    classify_boundary(&mut mesh, &wind, None).unwrap();
    let ops = OperatorSet::assemble(&mesh, &wind, 1.0e-3).unwrap();
    let grid = TimeGrid::new(0.01, 50).unwrap();
    let params = BumpParams::new(0.08, 0.06);
    let sample_times: Vec<f64> = (0..5).map(|i| 0.1 + 0.08 * i as f64).collect();
    let obs = ObservationOperator::assemble(
        &mesh,
        &ops.mass,
        &grid,
        &[[0.47, 0.53]],
        &sample_times,
        &params,
    )
    .unwrap();

    let constant = SpaceTimeField::new(grid.dt, vec![vec![3.0; mesh.n_nodes()]; 51]);
    let readings = obs.apply(&constant).unwrap();
    let worst = readings.iter().map(|r| (r - 3.0).abs()).fold(0.0f64, f64::max);
    assert!(worst <= 1e-6, "constant-field reading off by {worst:.3e} > 1e-6");
    println!("criterion 09 PASS: constant 3.0 read back within {worst:.1e} (<= 1e-6)");
}

/// Fixed seed in, identical bytes out: reruns and different thread
/// counts must agree exactly.
#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_path("desk_sparse.toml");
    let config = config.to_str().unwrap();

    let run_pair = |label: &str, threads: &str| -> (PathBuf, Vec<u8>, Vec<u8>) {
        let out_dir = dir.path().join(label);
        let out = out_dir.to_str().unwrap();
        run_cli(&["simulate", "--config", config, "--threads", threads, "--out", out]);
        run_cli(&["invert", "--config", config, "--threads", threads, "--out", out]);
        let m = std::fs::read(out_dir.join("measurements.csv")).unwrap();
        let p = std::fs::read(out_dir.join("predictions.csv")).unwrap();
        (out_dir, m, p)
    };

    let (dir_a, meas_a, pred_a) = run_pair("first", "1");
    let (dir_b, meas_b, pred_b) = run_pair("rerun", "1");
    let (dir_c, meas_c, pred_c) = run_pair("threaded", "4");

    assert_eq!(meas_a, meas_b, "rerun changed measurements.csv");
    assert_eq!(pred_a, pred_b, "rerun changed predictions.csv");
    assert_eq!(meas_a, meas_c, "thread count changed measurements.csv");
    assert_eq!(pred_a, pred_c, "thread count changed predictions.csv");

    let atoms = |d: &Path| read_report(d)["atoms"].clone();
    let a = atoms(&dir_a);
    assert_eq!(a, atoms(&dir_b), "rerun changed the atom set");
    assert_eq!(a, atoms(&dir_c), "thread count changed the atom set");
    let n_atoms = a.as_array().unwrap().len();
    println!(
        "criterion 10 PASS: {n_atoms}-atom set and CSVs byte-identical across rerun and 1 vs 4 threads"
    );
}
