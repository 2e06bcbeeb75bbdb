//! Time-dependent transport solves and their exact adjoints.
//!
//! The forward march is implicit Euler with streamline-upwind test
//! functions: with `A = M + Δt·V + Δt·κ·K + Δt·S_τ + V_τᵀ` and
//! `B = M + V_τᵀ`, each step solves `Ã u⁺ = B̃ (u + Δt·m)` from `u⁰ = 0`,
//! where the tilde versions impose zero Dirichlet values on inflow nodes by
//! row replacement. The adjoint march runs the transposed systems backwards
//! in time; both use one LU factorization. The two marches are transposes
//! of each other in exact arithmetic *and* in floating point: the adjoint
//! system matrix is the entry-for-entry transpose of the forward one.

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::linalg::BandedLu;
use crate::sparse::Csr;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Uniform time grid: `n_steps` implicit steps of length `dt` from t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("need at least one time step".into()));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    /// Time of state level `n` (0 ..= n_steps).
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.n_steps)
    }
}

/// Nodal field over all state levels of a march: `state(0)` is the initial
/// level, `state(n_steps)` the final one.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    dt: f64,
    states: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(dt: f64, states: Vec<Vec<f64>>) -> Self {
        SpaceTimeField { dt, states }
    }

    pub fn zeros(dt: f64, n_nodes: usize, n_levels: usize) -> Self {
        SpaceTimeField { dt, states: vec![vec![0.0; n_nodes]; n_levels] }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_levels(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    pub fn state_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.states[n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("at least one level")
    }
}

/// Nodal source amplitudes per step: `step(n)` is the load applied during
/// step `n` (from level n to n + 1). Unset or out-of-range steps mean zero,
/// so a source can drive a march longer than the window it was built for.
#[derive(Debug, Clone)]
pub struct SourceField {
    n_nodes: usize,
    steps: Vec<Option<Vec<f64>>>,
}

impl SourceField {
    pub fn zeros(n_nodes: usize, n_steps: usize) -> Self {
        SourceField { n_nodes, steps: vec![None; n_steps] }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn set_step(&mut self, n: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_nodes, "source step length mismatch");
        self.steps[n] = Some(values);
    }

    /// Adds `scale × values` into step `n`, materializing it if unset.
    pub fn accumulate(&mut self, n: usize, values: &[f64], scale: f64) {
        assert_eq!(values.len(), self.n_nodes, "source step length mismatch");
        let step = self.steps[n].get_or_insert_with(|| vec![0.0; self.n_nodes]);
        for (s, &v) in step.iter_mut().zip(values) {
            *s += scale * v;
        }
    }

    /// Load applied during step `n`; `None` means identically zero.
    pub fn step(&self, n: usize) -> Option<&[f64]> {
        self.steps.get(n).and_then(|s| s.as_deref())
    }
}

/// Counts of factorizations and linear solves performed by a solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStats {
    pub factorizations: usize,
    pub forward_solves: usize,
    pub adjoint_solves: usize,
    pub mass_solves: usize,
}

#[derive(Debug, Default)]
struct StatCounters {
    factorizations: AtomicUsize,
    forward_solves: AtomicUsize,
    adjoint_solves: AtomicUsize,
    mass_solves: AtomicUsize,
}

/// Factorized transport stepper over a fixed mesh, wind, diffusion
/// coefficient, and step size. All solve methods take `&self`, so one
/// solver can serve many marches, including concurrently.
#[derive(Debug)]
pub struct TransportSolver {
    ops: OperatorSet,
    dt: f64,
    /// Forward system matrix with inflow rows replaced by identity.
    system: Csr,
    /// Right-hand-side matrix with inflow rows zeroed.
    rhs_mat: Csr,
    /// Transpose of `rhs_mat`; applying it to a level of the adjoint march
    /// both zeroes the inflow entries and applies the transposed operator.
    rhs_mat_t: Csr,
    factor: BandedLu,
    mass_factor: BandedLu,
    stats: StatCounters,
}

impl TransportSolver {
    /// Combines the assembled operators for step size `dt`, imposes the
    /// inflow rows, and factorizes the system and mass matrices.
    pub fn new(ops: OperatorSet, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        let kappa = ops.kappa;
        let conv_tau_t = ops.convection_tau.transpose_same_pattern();

        let mut system = Csr::zeros(ops.pattern().clone());
        let mut rhs_mat = Csr::zeros(ops.pattern().clone());
        for idx in 0..ops.pattern().nnz() {
            let m = ops.mass.values[idx];
            let v = ops.convection.values[idx];
            let k = ops.stiffness.values[idx];
            let s_tau = ops.streamline_tau.values[idx];
            let v_tau_t = conv_tau_t.values[idx];
            system.values[idx] = m + dt * v + dt * kappa * k + dt * s_tau + v_tau_t;
            rhs_mat.values[idx] = m + v_tau_t;
        }
        replace_rows_with_identity(&mut system, &ops.inflow_nodes);
        zero_rows(&mut rhs_mat, &ops.inflow_nodes);
        let rhs_mat_t = rhs_mat.transpose_same_pattern();

        let factor = BandedLu::factor(&system)?;
        let mass_factor = BandedLu::factor(&ops.mass)?;
        let stats = StatCounters::default();
        stats.factorizations.store(2, Ordering::Relaxed);

        Ok(TransportSolver {
            ops,
            dt,
            system,
            rhs_mat,
            rhs_mat_t,
            factor,
            mass_factor,
            stats,
        })
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    /// The forward system matrix, inflow rows already replaced.
    pub fn system_matrix(&self) -> &Csr {
        &self.system
    }

    /// The adjoint system matrix: the exact entrywise transpose of
    /// [`Self::system_matrix`].
    pub fn adjoint_system_matrix(&self) -> Csr {
        self.system.transpose_same_pattern()
    }

    /// The matrix applied to `u + Δt·m` each step (inflow rows zero).
    pub fn rhs_matrix(&self) -> &Csr {
        &self.rhs_mat
    }

    /// Solves `M x = rhs` with the cached mass factorization.
    pub fn mass_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.stats.mass_solves.fetch_add(1, Ordering::Relaxed);
        self.mass_factor.solve(rhs)
    }

    /// Marches the source forward over `n_steps` implicit steps and returns
    /// all levels (initial zero level included). Steps beyond the source's
    /// window apply zero load, so `n_steps` may exceed it for forecasting;
    /// the shorter march is a bit-for-bit prefix of the longer one.
    pub fn solve_forward(&self, source: &SourceField, n_steps: usize) -> Result<SpaceTimeField> {
        let n = self.n();
        if source.n_nodes() != n {
            return Err(Error::DimensionMismatch(format!(
                "source has {} nodes, solver has {n}",
                source.n_nodes()
            )));
        }
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(vec![0.0; n]);
        let mut work = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for step in 0..n_steps {
            {
                let u = states.last().expect("nonempty");
                match source.step(step) {
                    Some(m) => {
                        for i in 0..n {
                            work[i] = u[i] + self.dt * m[i];
                        }
                    }
                    None => work.copy_from_slice(u),
                }
            }
            self.rhs_mat.matvec_into(&work, &mut rhs);
            self.stats.forward_solves.fetch_add(1, Ordering::Relaxed);
            states.push(self.factor.solve(&rhs)?);
        }
        Ok(SpaceTimeField::new(self.dt, states))
    }

    /// Marches the transposed systems backwards from a zero final level.
    /// `loads` holds one vector per state level (level 0 is never consumed:
    /// the initial state is fixed, so nothing propagates to it). Level `k`
    /// of the result pairs with step-`k` source loads in
    /// [`Self::source_pairing`].
    pub fn solve_adjoint(&self, loads: &SpaceTimeField) -> Result<SpaceTimeField> {
        let n = self.n();
        let n_levels = loads.n_levels();
        if n_levels < 2 {
            return Err(Error::DimensionMismatch(
                "adjoint needs at least two load levels".into(),
            ));
        }
        let n_steps = n_levels - 1;
        let mut states = vec![Vec::new(); n_levels];
        states[n_steps] = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for level in (0..n_steps).rev() {
            self.rhs_mat_t.matvec_into(&states[level + 1], &mut rhs);
            for (r, &g) in rhs.iter_mut().zip(loads.state(level + 1)) {
                *r += g;
            }
            self.stats.adjoint_solves.fetch_add(1, Ordering::Relaxed);
            states[level] = self.factor.solve_transpose(&rhs)?;
        }
        Ok(SpaceTimeField::new(self.dt, states))
    }

    /// The bilinear pairing `Δt · Σ_n ⟨B̃ m^n, p^n⟩` between a source and an
    /// adjoint march. Equals the pairing of the forward solution with the
    /// adjoint's loads — the identity the adjoint march exists to satisfy.
    pub fn source_pairing(&self, source: &SourceField, adjoint: &SpaceTimeField) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        let mut work = vec![0.0; n];
        for step in 0..adjoint.n_levels() - 1 {
            if let Some(m) = source.step(step) {
                self.rhs_mat.matvec_into(m, &mut work);
                let p = adjoint.state(step);
                total += work.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.dt * total
    }

    pub fn stats(&self) -> SolveStats {
        SolveStats {
            factorizations: self.stats.factorizations.load(Ordering::Relaxed),
            forward_solves: self.stats.forward_solves.load(Ordering::Relaxed),
            adjoint_solves: self.stats.adjoint_solves.load(Ordering::Relaxed),
            mass_solves: self.stats.mass_solves.load(Ordering::Relaxed),
        }
    }
}

/// Solves the steady transport balance `(V + κK + S_τ) c = M q` with
/// Dirichlet values pinned by row replacement at the listed nodes (inflow
/// nodes are callers' responsibility to include — typically at value zero).
pub fn solve_steady(
    ops: &OperatorSet,
    load: &[f64],
    dirichlet: &[(usize, f64)],
) -> Result<Vec<f64>> {
    let n = ops.n();
    if load.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "load has {} entries, operators have {n}",
            load.len()
        )));
    }
    let mut system = Csr::zeros(ops.pattern().clone());
    for idx in 0..ops.pattern().nnz() {
        system.values[idx] =
            ops.convection.values[idx] + ops.kappa * ops.stiffness.values[idx]
                + ops.streamline_tau.values[idx];
    }
    let mut rhs = ops.mass.matvec(load);
    let nodes: Vec<usize> = dirichlet.iter().map(|&(i, _)| i).collect();
    replace_rows_with_identity(&mut system, &nodes);
    for &(i, value) in dirichlet {
        if i >= n {
            return Err(Error::DimensionMismatch(format!(
                "Dirichlet node {i} out of range for {n} nodes"
            )));
        }
        rhs[i] = value;
    }
    let factor = BandedLu::factor(&system)?;
    factor.solve(&rhs)
}

fn replace_rows_with_identity(mat: &mut Csr, rows: &[usize]) {
    for &i in rows {
        let (lo, hi) = (mat.pattern.row_ptr[i], mat.pattern.row_ptr[i + 1]);
        for idx in lo..hi {
            mat.values[idx] = if mat.pattern.cols[idx] == i { 1.0 } else { 0.0 };
        }
    }
}

fn zero_rows(mat: &mut Csr, rows: &[usize]) {
    for &i in rows {
        let (lo, hi) = (mat.pattern.row_ptr[i], mat.pattern.row_ptr[i + 1]);
        for idx in lo..hi {
            mat.values[idx] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify_boundary, Mesh};
    use crate::wind::{WindField, WindModel};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn solver(
        w: f64,
        h: f64,
        nx: usize,
        ny: usize,
        wind: WindField,
        kappa: f64,
        dt: f64,
    ) -> TransportSolver {
        let mut mesh = Mesh::generate_rect(w, h, nx, ny).unwrap();
        classify_boundary(&mut mesh, &wind, None).unwrap();
        let ops = OperatorSet::assemble(&mesh, &wind, kappa).unwrap();
        TransportSolver::new(ops, dt).unwrap()
    }

    fn swirl() -> WindField {
        WindField::Analytic(vec![
            WindModel::Uniform { vx: 0.4, vy: 0.05 },
            WindModel::Vortex { cx: 0.5, cy: 0.5, strength: 0.3 },
        ])
    }

    #[test]
    fn still_air_conserves_injected_mass() {
        let s = solver(1.0, 1.0, 12, 12, WindField::still(), 0.05, 0.01);
        let n = s.n();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut source = SourceField::zeros(n, 40);
        for step in [0, 3, 17] {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            source.set_step(step, v);
        }
        let u = s.solve_forward(&source, 40).unwrap();

        let ones = vec![1.0; n];
        let weights = s.ops().mass.matvec(&ones);
        let mass = |x: &[f64]| weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();

        let mut expected = 0.0;
        let mut scale: f64 = 1.0;
        for step in 0..40 {
            if let Some(m) = source.step(step) {
                expected += s.dt() * mass(m);
            }
            let got = mass(u.state(step + 1));
            scale = scale.max(expected.abs());
            assert!(
                (got - expected).abs() <= 1e-12 * scale,
                "step {step}: mass {got} vs {expected}"
            );
        }
    }

    #[test]
    fn inflow_values_are_exactly_zero() {
        let s = solver(1.0, 1.0, 8, 8, WindField::uniform(1.0, 0.0), 1e-3, 0.02);
        let n = s.n();
        let mut source = SourceField::zeros(n, 10);
        source.set_step(0, vec![1.0; n]);
        let u = s.solve_forward(&source, 10).unwrap();
        let inflow = s.ops().inflow_nodes.clone();
        assert!(!inflow.is_empty());
        for level in 0..=10 {
            for &i in &inflow {
                assert_eq!(u.state(level)[i], 0.0);
            }
        }
    }

    /// The defining property of the adjoint march: pairing the forward
    /// solution with arbitrary loads equals pairing the source with the
    /// adjoint solution of those loads.
    #[test]
    fn adjoint_reproduces_forward_pairing() {
        let s = solver(1.0, 1.0, 16, 16, swirl(), 1e-3, 0.01);
        let n = s.n();
        let n_steps = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for round in 0..5 {
            let mut source = SourceField::zeros(n, n_steps);
            for step in 0..n_steps {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                source.set_step(step, v);
            }
            let mut loads = SpaceTimeField::zeros(s.dt(), n, n_steps + 1);
            for level in 0..=n_steps {
                for x in loads.state_mut(level) {
                    *x = rng.random_range(-1.0..1.0);
                }
            }

            let u = s.solve_forward(&source, n_steps).unwrap();
            let direct: f64 = (0..=n_steps)
                .map(|l| {
                    u.state(l)
                        .iter()
                        .zip(loads.state(l))
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum();

            let p = s.solve_adjoint(&loads).unwrap();
            let paired = s.source_pairing(&source, &p);

            let rel = (direct - paired).abs() / direct.abs().max(1e-30);
            assert!(rel <= 1e-8, "round {round}: {direct} vs {paired} (rel {rel:.3e})");
        }
    }

    #[test]
    fn adjoint_matrix_is_entrywise_transpose() {
        let s = solver(1.0, 1.0, 10, 10, swirl(), 2e-3, 0.015);
        let fwd = s.system_matrix();
        let adj = s.adjoint_system_matrix();
        let pat = &fwd.pattern;
        for i in 0..pat.n {
            for idx in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                let j = pat.cols[idx];
                assert_eq!(adj.get(i, j).to_bits(), fwd.get(j, i).to_bits());
            }
        }

        // Independent reconstruction: combine the raw operators in
        // transposed index order, then pin inflow columns. Addition order
        // matches the forward combination, so agreement is bit-exact.
        let ops = s.ops();
        let conv_tau_t = ops.convection_tau.transpose_same_pattern();
        let dt = s.dt();
        let mut inflow = vec![false; s.n()];
        for &i in &ops.inflow_nodes {
            inflow[i] = true;
        }
        for i in 0..pat.n {
            for idx in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                let j = pat.cols[idx];
                let expect = if inflow[j] {
                    if i == j { 1.0 } else { 0.0 }
                } else {
                    ops.mass.get(j, i)
                        + dt * ops.convection.get(j, i)
                        + dt * ops.kappa * ops.stiffness.get(j, i)
                        + dt * ops.streamline_tau.get(j, i)
                        + conv_tau_t.get(j, i)
                };
                assert_eq!(adj.get(i, j).to_bits(), expect.to_bits(), "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn doubling_the_source_doubles_the_solution_exactly() {
        let s = solver(1.0, 1.0, 8, 8, swirl(), 1e-3, 0.01);
        let n = s.n();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut source = SourceField::zeros(n, 6);
        source.set_step(1, base.clone());
        let mut doubled = SourceField::zeros(n, 6);
        doubled.set_step(1, base.iter().map(|x| 2.0 * x).collect());

        let u1 = s.solve_forward(&source, 6).unwrap();
        let u2 = s.solve_forward(&doubled, 6).unwrap();
        for level in 0..=6 {
            for (a, b) in u1.state(level).iter().zip(u2.state(level)) {
                assert_eq!((2.0 * a).to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn longer_march_extends_the_shorter_bit_for_bit() {
        let s = solver(1.0, 1.0, 8, 8, swirl(), 1e-3, 0.01);
        let n = s.n();
        let mut source = SourceField::zeros(n, 5);
        source.set_step(2, vec![0.3; n]);
        let short = s.solve_forward(&source, 5).unwrap();
        let long = s.solve_forward(&source, 12).unwrap();
        assert_eq!(long.n_levels(), 13);
        for level in 0..=5 {
            assert_eq!(short.state(level), long.state(level));
        }
    }

    #[test]
    fn solve_counters_track_work() {
        let s = solver(1.0, 1.0, 6, 6, WindField::uniform(1.0, 0.0), 1e-2, 0.01);
        assert_eq!(
            s.stats(),
            SolveStats { factorizations: 2, forward_solves: 0, adjoint_solves: 0, mass_solves: 0 }
        );
        let source = SourceField::zeros(s.n(), 100);
        s.solve_forward(&source, 100).unwrap();
        assert_eq!(s.stats().forward_solves, 100);
        assert_eq!(s.stats().factorizations, 2);

        let loads = SpaceTimeField::zeros(s.dt(), s.n(), 11);
        s.solve_adjoint(&loads).unwrap();
        assert_eq!(s.stats().adjoint_solves, 10);
    }

    #[test]
    fn steady_pure_diffusion_with_unit_boundary_is_constant() {
        let wind = WindField::still();
        let mut mesh = Mesh::generate_rect(1.0, 1.0, 8, 8).unwrap();
        classify_boundary(&mut mesh, &wind, None).unwrap();
        let ops = OperatorSet::assemble(&mesh, &wind, 0.3).unwrap();

        let mut boundary_nodes: Vec<usize> = mesh
            .boundary_edges()
            .iter()
            .flat_map(|&[a, b]| [a, b])
            .collect();
        boundary_nodes.sort_unstable();
        boundary_nodes.dedup();
        let dirichlet: Vec<(usize, f64)> = boundary_nodes.iter().map(|&i| (i, 1.0)).collect();

        let load = vec![0.0; ops.n()];
        let c = solve_steady(&ops, &load, &dirichlet).unwrap();
        for (i, &v) in c.iter().enumerate() {
            assert!((v - 1.0).abs() <= 1e-10, "node {i}: {v}");
        }
    }

    #[test]
    fn steady_downstream_of_injection_is_positive() {
        let wind = WindField::uniform(1.0, 0.0);
        let mut mesh = Mesh::generate_rect(2.0, 1.0, 32, 16).unwrap();
        classify_boundary(&mut mesh, &wind, None).unwrap();
        let ops = OperatorSet::assemble(&mesh, &wind, 1e-2).unwrap();

        let mut load = vec![0.0; ops.n()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            if (p[0] - 0.5).abs() < 0.15 && (p[1] - 0.5).abs() < 0.15 {
                load[i] = 1.0;
            }
        }
        let dirichlet: Vec<(usize, f64)> =
            mesh.inflow_nodes().unwrap().into_iter().map(|i| (i, 0.0)).collect();
        let c = solve_steady(&ops, &load, &dirichlet).unwrap();

        // Upstream of the injection the plume decays over the numerical
        // diffusion length; downstream it is carried essentially undiluted.
        let probe_up = mesh.interpolate(&c, [0.1, 0.5]).unwrap();
        let probe_down = mesh.interpolate(&c, [1.5, 0.5]).unwrap();
        assert!(probe_down > 10.0 * probe_up.abs().max(1e-12), "{probe_up} vs {probe_down}");
        assert!(probe_down > 0.0);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let s = solver(1.0, 1.0, 4, 4, WindField::uniform(1.0, 0.0), 1e-2, 0.01);
        let source = SourceField::zeros(s.n() + 1, 3);
        assert!(s.solve_forward(&source, 3).is_err());
        assert!(TimeGrid::new(0.0, 5).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 5).is_err());
    }
}
