//! Sparse source identification by greedy atom insertion.
//!
//! The released material is modeled as a nonnegative combination of
//! *atoms* — release profiles centered at a mesh node and active during a
//! single time step. Starting from an empty set, each outer iteration:
//!
//! 1. marches the adjoint equation driven by the current data misfit,
//! 2. scans a gradient field over every candidate atom and inserts the
//!    most promising one (if any clears the charge threshold),
//! 3. re-optimizes all weights with the nonnegative lasso,
//! 4. drops atoms whose weights collapsed to numerical zero.
//!
//! The scan in step 2 is the exact derivative of the data-misfit term with
//! respect to a unit atom, computed at transport-solver precision, so the
//! loop stops with a certificate: no remaining atom can lower the
//! objective by more than the tolerance.

use crate::error::{Error, Result};
use crate::lasso::{self, LassoProblem};
use crate::sensing::{misfit, ObservationOperator};
use crate::source::{atoms_to_source, Atom, ShapeBasis};
use crate::transport::{SpaceTimeField, TransportSolver};
use rayon::prelude::*;

/// Everything the inversion needs: the transport solver, the atom basis,
/// and the observation operator, with consistent dimensions.
#[derive(Debug)]
pub struct InversionStack {
    pub solver: TransportSolver,
    pub basis: ShapeBasis,
    pub obs: ObservationOperator,
    n_steps: usize,
}

impl InversionStack {
    pub fn new(
        solver: TransportSolver,
        basis: ShapeBasis,
        obs: ObservationOperator,
    ) -> Result<Self> {
        if basis.n_nodes() != solver.n() || obs.n_nodes() != solver.n() {
            return Err(Error::DimensionMismatch(format!(
                "solver has {} nodes, basis {}, observations {}",
                solver.n(),
                basis.n_nodes(),
                obs.n_nodes()
            )));
        }
        if obs.n_levels() < 2 {
            return Err(Error::InvalidParameter(
                "observation operator spans fewer than two time levels".into(),
            ));
        }
        let n_steps = obs.n_levels() - 1;
        Ok(Self { solver, basis, obs, n_steps })
    }

    /// Number of transport steps in the observation window.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Readings produced by a weighted atom set over the observation window.
    pub fn predict_readings(&self, atoms: &[Atom], weights: &[f64]) -> Result<Vec<f64>> {
        let states = predict(self, atoms, weights, self.n_steps)?;
        self.obs.apply(&states)
    }
}

/// Tuning knobs for the insertion loop.
#[derive(Debug, Clone, Copy)]
pub struct PdapConfig {
    /// Charge per unit release weight; also the insertion bar.
    pub alpha: f64,
    /// Outer-iteration cap.
    pub max_iterations: usize,
    /// Slack above `alpha` an atom's gradient must clear to be inserted;
    /// `None` means one part in a thousand of `alpha`.
    pub insert_tolerance: Option<f64>,
    /// Weights below this fraction of the largest weight are dropped.
    pub prune_ratio: f64,
}

impl PdapConfig {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, max_iterations: 100, insert_tolerance: None, prune_ratio: 1e-8 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "weight charge must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("iteration cap must be positive".into()));
        }
        if let Some(tol) = self.insert_tolerance {
            if !(tol >= 0.0) || !tol.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "insertion slack must be nonnegative and finite, got {tol}"
                )));
            }
        }
        if !(self.prune_ratio >= 0.0) || !(self.prune_ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prune ratio must lie in [0, 1), got {}",
                self.prune_ratio
            )));
        }
        Ok(())
    }

    fn insert_threshold(&self) -> f64 {
        self.alpha + self.insert_tolerance.unwrap_or(1e-3 * self.alpha)
    }
}

/// One outer iteration's bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// Objective after the weight re-optimization (before pruning).
    pub objective: f64,
    /// Euclidean norm of the reading residual at those weights.
    pub misfit_norm: f64,
    /// Largest insertion-gradient value over all candidate atoms.
    pub max_dual: f64,
    /// Atom inserted this iteration, if any.
    pub inserted: Option<Atom>,
    /// Number of atoms pruned after re-optimization.
    pub pruned: usize,
}

/// Final state of the inversion.
#[derive(Debug, Clone)]
pub struct PdapReport {
    pub atoms: Vec<Atom>,
    pub weights: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Readings implied by the returned atoms and weights.
    pub predicted: Vec<f64>,
    /// First-order-condition residual of the final weight optimization.
    pub lasso_kkt: f64,
}

/// Candidate-evaluation field for one adjoint state: entry `j` is the
/// negative objective derivative for a unit atom centered at node `j` and
/// active during `step`. An atom is worth inserting where this exceeds the
/// weight charge.
pub fn insertion_field(
    stack: &InversionStack,
    adjoint: &SpaceTimeField,
    step: usize,
) -> Result<Vec<f64>> {
    let ops = stack.solver.ops();
    let mut z = adjoint.state(step).to_vec();
    for &i in &ops.inflow_nodes {
        z[i] = 0.0;
    }
    // The derivative pairs the atom's release profile with the adjoint
    // through the same right-hand-side operator the march applies to
    // sources: mass plus the streamline-shifted convection term.
    let shifted = ops.convection_tau.matvec(&z);
    let correction = stack.solver.mass_solve(&shifted)?;
    for (zi, ci) in z.iter_mut().zip(&correction) {
        *zi += ci;
    }
    let dt = stack.solver.dt();
    Ok(stack.basis.apply_all(&z).into_iter().map(|v| -dt * v).collect())
}

/// Spatial dual field of one adjoint state: entry `j` is the inner product
/// of the release profile at node `j` with the negated adjoint. Without
/// inflow nodes and streamline shifting this equals the insertion field
/// divided by the step size.
pub fn dual_field(basis: &ShapeBasis, adjoint_state: &[f64]) -> Vec<f64> {
    basis.apply_all(adjoint_state).into_iter().map(|v| -v).collect()
}

/// Predicted readings of a single unit atom — one design-matrix column.
fn unit_atom_column(stack: &InversionStack, atom: Atom) -> Result<Vec<f64>> {
    let source = atoms_to_source(&stack.solver, &stack.basis, &[atom], &[1.0], stack.n_steps)?;
    let states = stack.solver.solve_forward(&source, stack.n_steps)?;
    stack.obs.apply(&states)
}

/// Marches the weighted atom set forward over `n_steps` transport steps —
/// use a longer window than the observations to forecast.
pub fn predict(
    stack: &InversionStack,
    atoms: &[Atom],
    weights: &[f64],
    n_steps: usize,
) -> Result<SpaceTimeField> {
    let source = atoms_to_source(&stack.solver, &stack.basis, atoms, weights, n_steps)?;
    stack.solver.solve_forward(&source, n_steps)
}

/// Runs the full insertion loop against measured readings.
pub fn pdap_run(
    stack: &InversionStack,
    data: &[f64],
    sigma: f64,
    config: &PdapConfig,
) -> Result<PdapReport> {
    config.validate()?;
    if data.len() != stack.obs.n_obs() {
        return Err(Error::DimensionMismatch(format!(
            "{} readings for {} observation rows",
            data.len(),
            stack.obs.n_obs()
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise scale must be positive and finite, got {sigma}"
        )));
    }

    let threshold = config.insert_threshold();
    let mut atoms: Vec<Atom> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut lasso_kkt = 0.0;

    for _ in 0..config.max_iterations {
        // Current predicted readings from the cached columns, so the
        // gradient scan sees exactly the residual the lasso optimized.
        let mut predicted = vec![0.0; data.len()];
        for (col, &w) in columns.iter().zip(&weights) {
            if w != 0.0 {
                for (p, &c) in predicted.iter_mut().zip(col) {
                    *p += w * c;
                }
            }
        }
        let residual_vec = misfit(&predicted, data, sigma)?;
        let loads = stack.obs.scatter(&residual_vec, stack.solver.dt())?;
        let adjoint = stack.solver.solve_adjoint(&loads)?;

        // Evaluate every candidate atom: steps independently in parallel,
        // then a sequential scan so ties break toward the lowest step and
        // node regardless of thread count.
        let fields: Vec<Vec<f64>> = (0..stack.n_steps)
            .into_par_iter()
            .map(|step| insertion_field(stack, &adjoint, step))
            .collect::<Result<_>>()?;
        let active: std::collections::HashSet<Atom> = atoms.iter().copied().collect();
        let mut max_dual = f64::NEG_INFINITY;
        let mut best_new: Option<(Atom, f64)> = None;
        for (step, field) in fields.iter().enumerate() {
            for (node, &phi) in field.iter().enumerate() {
                max_dual = max_dual.max(phi);
                let atom = Atom { step, node };
                if !active.contains(&atom) && best_new.as_ref().is_none_or(|&(_, b)| phi > b) {
                    best_new = Some((atom, phi));
                }
            }
        }

        let insert = best_new.filter(|&(_, phi)| phi > threshold);
        let Some((atom, _)) = insert else {
            // Certificate: no candidate clears the charge — we are at the
            // sparse optimum up to the insertion slack.
            let problem = LassoProblem { columns: &columns, data, sigma, alpha: config.alpha };
            history.push(IterationRecord {
                objective: lasso::objective(&problem, &weights),
                misfit_norm: lasso::residual_norm(&columns, data, &weights),
                max_dual,
                inserted: None,
                pruned: 0,
            });
            converged = true;
            break;
        };

        columns.push(unit_atom_column(stack, atom)?);
        atoms.push(atom);
        let mut warm = weights.clone();
        warm.push(0.0);

        let solution = {
            let problem = LassoProblem { columns: &columns, data, sigma, alpha: config.alpha };
            lasso::solve_nn_lasso(&problem, Some(&warm))?
        };
        if !solution.converged {
            return Err(Error::Numerical(format!(
                "weight optimization stalled with first-order residual {:.3e}",
                solution.kkt_residual
            )));
        }
        // The weight optimizer sees the candidate's exact readings; if it
        // charges the new atom away, the scan's excess over the threshold
        // was below its numerical noise floor (the scan shares the
        // residual's noise amplified by 1/σ²). Roll the insertion back and
        // stop at the previous optimum, which the lasso just re-certified.
        let w_max = solution.weights.iter().fold(0.0f64, |m, &w| m.max(w));
        let new_weight = *solution.weights.last().unwrap();
        if w_max == 0.0 || new_weight < config.prune_ratio * w_max {
            columns.pop();
            atoms.pop();
            let problem = LassoProblem { columns: &columns, data, sigma, alpha: config.alpha };
            history.push(IterationRecord {
                objective: lasso::objective(&problem, &weights),
                misfit_norm: lasso::residual_norm(&columns, data, &weights),
                max_dual,
                inserted: None,
                pruned: 0,
            });
            converged = true;
            break;
        }
        weights = solution.weights;
        lasso_kkt = solution.kkt_residual;

        let problem = LassoProblem { columns: &columns, data, sigma, alpha: config.alpha };
        let objective = lasso::objective(&problem, &weights);
        let misfit_norm = lasso::residual_norm(&columns, data, &weights);

        // Atoms the optimizer parked at exactly zero weight contribute
        // nothing to the objective or the predictions — dropping them
        // keeps the active set small without perturbing later iterates.
        let keep: Vec<bool> = weights.iter().map(|&w| w != 0.0).collect();
        let pruned = keep.iter().filter(|&&k| !k).count();
        if pruned > 0 {
            let mut idx = 0;
            atoms.retain(|_| {
                idx += 1;
                keep[idx - 1]
            });
            idx = 0;
            weights.retain(|_| {
                idx += 1;
                keep[idx - 1]
            });
            idx = 0;
            columns.retain(|_| {
                idx += 1;
                keep[idx - 1]
            });
        }

        history.push(IterationRecord {
            objective,
            misfit_norm,
            max_dual,
            inserted: Some(atom),
            pruned,
        });
    }

    // Weights negligible against the largest are numerical dust; drop them
    // from the reported set.
    let w_max = weights.iter().fold(0.0f64, |m, &w| m.max(w));
    if w_max > 0.0 {
        let keep: Vec<bool> = weights.iter().map(|&w| w >= config.prune_ratio * w_max).collect();
        let mut idx = 0;
        atoms.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        idx = 0;
        weights.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        idx = 0;
        columns.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
    }

    let mut predicted = vec![0.0; data.len()];
    for (col, &w) in columns.iter().zip(&weights) {
        for (p, &c) in predicted.iter_mut().zip(col) {
            *p += w * c;
        }
    }
    let iterations = history.len();
    Ok(PdapReport { atoms, weights, history, converged, iterations, predicted, lasso_kkt })
}
