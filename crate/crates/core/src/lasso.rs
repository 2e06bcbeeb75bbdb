//! Nonnegative lasso: least squares with an L1 charge on nonnegative
//! weights.
//!
//! Minimizes `(1/(2σ²))·‖A·λ − d‖² + α·Σ λ_j` over `λ ≥ 0` for a dense
//! design matrix given column by column. The solver works on the normal
//! equations (Gram matrix and correlations), which makes it invariant to
//! the noise scale: rescaling `σ → c·σ`, `α → α/c²` leaves the minimizer
//! unchanged. A primal-dual active-set iteration does the work — exact on
//! its final set — with a projected-gradient fallback for degenerate
//! (rank-deficient or cycling) cases.

use crate::error::{Error, Result};

/// One nonnegative-lasso instance. `columns` are the design matrix columns
/// (all of `data`'s length), `sigma` the noise scale, `alpha` the charge
/// per unit weight.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub columns: &'a [Vec<f64>],
    pub data: &'a [f64],
    pub sigma: f64,
    pub alpha: f64,
}

/// Solver outcome. `kkt_residual` is the largest first-order-condition
/// violation in gradient units: positive weights must sit where the
/// regularized gradient vanishes; zero weights where it is nonnegative.
#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// True when the active-set iteration failed and the projected-gradient
    /// fallback produced the result.
    pub used_fallback: bool,
}

/// Iteration caps for the active-set loop and the fallback.
const MAX_ACTIVE_SET_ITERS: usize = 100;
const MAX_GRADIENT_ITERS: usize = 500 * 40;

impl LassoProblem<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise scale must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "weight charge must be nonnegative and finite, got {}",
                self.alpha
            )));
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.len() != self.data.len() {
                return Err(Error::DimensionMismatch(format!(
                    "column {j} has {} entries, data has {}",
                    col.len(),
                    self.data.len()
                )));
            }
        }
        Ok(())
    }

    /// Convergence tolerance on the KKT residual, in gradient units.
    pub fn kkt_tolerance(&self) -> f64 {
        let d_max = self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        1e-9 * (1.0 + d_max / (self.sigma * self.sigma))
    }
}

/// Objective value `(1/(2σ²))·‖A·λ − d‖² + α·Σ λ`.
pub fn objective(problem: &LassoProblem, weights: &[f64]) -> f64 {
    let r = residual(problem.columns, problem.data, weights);
    let ss: f64 = r.iter().map(|v| v * v).sum();
    ss / (2.0 * problem.sigma * problem.sigma) + problem.alpha * weights.iter().sum::<f64>()
}

/// Euclidean norm of the data residual `A·λ − d`.
pub fn residual_norm(columns: &[Vec<f64>], data: &[f64], weights: &[f64]) -> f64 {
    residual(columns, data, weights).iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn residual(columns: &[Vec<f64>], data: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = data.iter().map(|&v| -v).collect();
    for (col, &w) in columns.iter().zip(weights) {
        if w != 0.0 {
            for (ri, &ci) in r.iter_mut().zip(col) {
                *ri += w * ci;
            }
        }
    }
    r
}

/// Largest violation of the first-order conditions at `weights`, in
/// gradient units: with `g = (1/σ²)·Aᵀ(Aλ − d)`, a positive weight
/// contributes `|g_j + α|` and a zero weight `max(0, −(g_j + α))`.
pub fn kkt_residual(problem: &LassoProblem, weights: &[f64]) -> f64 {
    let r = residual(problem.columns, problem.data, weights);
    let inv_s2 = 1.0 / (problem.sigma * problem.sigma);
    let mut worst = 0.0f64;
    for (j, col) in problem.columns.iter().enumerate() {
        let g = inv_s2 * col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + problem.alpha;
        let v = if weights[j] > 0.0 { g.abs() } else { (-g).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Solves the nonnegative lasso. `initial` warm-starts the active set (its
/// positive entries start free); pass `None` to start from zero.
pub fn solve_nn_lasso(problem: &LassoProblem, initial: Option<&[f64]>) -> Result<LassoSolution> {
    problem.validate()?;
    let k = problem.columns.len();
    if k == 0 {
        return Ok(LassoSolution {
            weights: Vec::new(),
            iterations: 0,
            converged: true,
            kkt_residual: 0.0,
            used_fallback: false,
        });
    }
    if let Some(init) = initial {
        if init.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} weights for {k} columns",
                init.len()
            )));
        }
    }

    // Normal-equation data, in σ-free units.
    let gram = gram_matrix(problem.columns);
    let corr: Vec<f64> = problem
        .columns
        .iter()
        .map(|col| col.iter().zip(problem.data).map(|(a, b)| a * b).sum())
        .collect();
    let s2 = problem.sigma * problem.sigma;
    let charge = problem.alpha * s2;
    // KKT tolerance converted to the σ-free units the loop works in.
    let tol_scaled = problem.kkt_tolerance() * s2;

    match active_set_iteration(&gram, &corr, charge, k, initial, tol_scaled) {
        Some((weights, iterations)) => {
            let kkt = kkt_residual(problem, &weights);
            Ok(LassoSolution {
                weights,
                iterations,
                converged: kkt <= problem.kkt_tolerance(),
                kkt_residual: kkt,
                used_fallback: false,
            })
        }
        None => {
            let (weights, iterations, converged) =
                projected_gradient(&gram, &corr, charge, k, tol_scaled);
            let kkt = kkt_residual(problem, &weights);
            Ok(LassoSolution {
                weights,
                iterations,
                converged: converged && kkt <= 10.0 * problem.kkt_tolerance(),
                kkt_residual: kkt,
                used_fallback: true,
            })
        }
    }
}

fn gram_matrix(columns: &[Vec<f64>]) -> Vec<f64> {
    let k = columns.len();
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            gram[i * k + j] = v;
            gram[j * k + i] = v;
        }
    }
    gram
}

/// Primal-dual active-set loop. Returns `None` when it cycles, exceeds its
/// iteration cap, or hits a non-positive-definite subsystem — the caller
/// then falls back to projected gradient.
fn active_set_iteration(
    gram: &[f64],
    corr: &[f64],
    charge: f64,
    k: usize,
    initial: Option<&[f64]>,
    tol_scaled: f64,
) -> Option<(Vec<f64>, usize)> {
    let mut free: Vec<bool> = match initial {
        Some(init) => init.iter().map(|&w| w > 0.0).collect(),
        None => vec![false; k],
    };
    // With everything at bound, free the columns whose dual is violated —
    // otherwise λ = 0 is already optimal.
    if free.iter().all(|f| !f) {
        let mut any = false;
        for j in 0..k {
            if -corr[j] + charge < -tol_scaled {
                free[j] = true;
                any = true;
            }
        }
        if !any {
            return Some((vec![0.0; k], 0));
        }
    }

    let mut seen = std::collections::HashSet::new();
    for iteration in 1..=MAX_ACTIVE_SET_ITERS {
        if !seen.insert(free.clone()) {
            return None; // cycling
        }
        let idx: Vec<usize> = (0..k).filter(|&j| free[j]).collect();
        let m = idx.len();
        let mut sub = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (a, &i) in idx.iter().enumerate() {
            rhs[a] = corr[i] - charge;
            for (b, &j) in idx.iter().enumerate() {
                sub[a * m + b] = gram[i * k + j];
            }
        }
        let sol = cholesky_solve(&mut sub, &rhs, m)?;

        let mut weights = vec![0.0; k];
        for (a, &i) in idx.iter().enumerate() {
            weights[i] = sol[a];
        }

        // Primal violations leave the free set; dual violations join it.
        let mut next = vec![false; k];
        let mut changed = false;
        for &i in &idx {
            if weights[i] > 0.0 {
                next[i] = true;
            } else {
                weights[i] = 0.0;
                changed = true;
            }
        }
        for j in 0..k {
            if free[j] {
                continue;
            }
            let dual: f64 = (0..k)
                .map(|i| gram[j * k + i] * weights[i])
                .sum::<f64>()
                - corr[j]
                + charge;
            if dual < -tol_scaled {
                next[j] = true;
                changed = true;
            }
        }
        if !changed {
            return Some((weights, iteration));
        }
        free = next;
    }
    None
}

/// Dense Cholesky solve of a symmetric positive definite `m × m` system
/// stored row-major; `None` on a non-positive pivot.
fn cholesky_solve(a: &mut [f64], rhs: &[f64], m: usize) -> Option<Vec<f64>> {
    let scale = (0..m).map(|i| a[i * m + i]).fold(0.0f64, f64::max);
    for j in 0..m {
        let mut d = a[j * m + j];
        for p in 0..j {
            d -= a[j * m + p] * a[j * m + p];
        }
        if !(d > 1e-13 * scale.max(1e-300)) {
            return None;
        }
        let l = d.sqrt();
        a[j * m + j] = l;
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for p in 0..j {
                v -= a[i * m + p] * a[j * m + p];
            }
            a[i * m + j] = v / l;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..m {
        for p in 0..i {
            y[i] -= a[i * m + p] * y[p];
        }
        y[i] /= a[i * m + i];
    }
    for i in (0..m).rev() {
        for p in i + 1..m {
            y[i] -= a[p * m + i] * y[p];
        }
        y[i] /= a[i * m + i];
    }
    Some(y)
}

/// Accelerated projected gradient on the σ-free objective; handles the
/// degenerate problems the active-set loop gives up on.
fn projected_gradient(
    gram: &[f64],
    corr: &[f64],
    charge: f64,
    k: usize,
    tol_scaled: f64,
) -> (Vec<f64>, usize, bool) {
    let lipschitz = power_iteration_bound(gram, k).max(1e-300);
    let step = 1.0 / lipschitz;
    let mut w = vec![0.0; k];
    let mut momentum = w.clone();
    let mut t_prev = 1.0f64;
    for iteration in 1..=MAX_GRADIENT_ITERS {
        let mut grad = vec![charge; k];
        for j in 0..k {
            let mut g = 0.0;
            for i in 0..k {
                g += gram[j * k + i] * momentum[i];
            }
            grad[j] += g - corr[j];
        }
        let next: Vec<f64> = (0..k)
            .map(|j| (momentum[j] - step * grad[j]).max(0.0))
            .collect();
        let t = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        momentum = (0..k)
            .map(|j| next[j] + (t_prev - 1.0) / t * (next[j] - w[j]))
            .collect();
        t_prev = t;
        w = next;
        if iteration % 50 == 0 && kkt_scaled(gram, corr, charge, k, &w) <= tol_scaled {
            return (w, iteration, true);
        }
    }
    let ok = kkt_scaled(gram, corr, charge, k, &w) <= 10.0 * tol_scaled;
    (w, MAX_GRADIENT_ITERS, ok)
}

fn kkt_scaled(gram: &[f64], corr: &[f64], charge: f64, k: usize, w: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..k {
        let mut g = charge - corr[j];
        for i in 0..k {
            g += gram[j * k + i] * w[i];
        }
        let v = if w[j] > 0.0 { g.abs() } else { (-g).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Upper bound on the largest Gram eigenvalue by deterministic power
/// iteration with a safety margin.
fn power_iteration_bound(gram: &[f64], k: usize) -> f64 {
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0f64;
    for _ in 0..100 {
        let mut gv = vec![0.0; k];
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..k {
                s += gram[i * k + j] * v[j];
            }
            gv[i] = s;
        }
        let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        for (vi, gi) in v.iter_mut().zip(&gv) {
            *vi = gi / norm;
        }
    }
    lambda * 1.01
}
