//! Diffusion-coefficient calibration against a steady tracer experiment.
//!
//! A known tracer is held at fixed concentration on a patch while the wind
//! carries it downstream; concentrations are read along a line probe. The
//! calibration sweeps candidate diffusion coefficients, solves the steady
//! transport balance for each, and scores the mean squared difference
//! between simulated and reference probe readings. The best candidate is
//! the one with the lowest score; ties go to the smaller coefficient.

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::mesh::Mesh;
use crate::transport::solve_steady;
use crate::wind::WindField;
use rayon::prelude::*;

/// A straight sampling line: `n_points` equally spaced readings from
/// `start` along the direction `dir` over the given length, endpoints
/// included.
#[derive(Debug, Clone, Copy)]
pub struct LineProbe {
    pub start: [f64; 2],
    pub dir: [f64; 2],
    pub length: f64,
    pub n_points: usize,
}

impl LineProbe {
    pub fn new(start: [f64; 2], dir: [f64; 2], length: f64, n_points: usize) -> Result<Self> {
        let probe = Self { start, dir, length, n_points };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        let mag = (self.dir[0] * self.dir[0] + self.dir[1] * self.dir[1]).sqrt();
        if !(mag > 0.0) || !mag.is_finite() {
            return Err(Error::InvalidParameter(
                "probe direction must be a nonzero finite vector".into(),
            ));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "probe length must be positive and finite, got {}",
                self.length
            )));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "probe needs at least two points, got {}",
                self.n_points
            )));
        }
        if !self.start.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("probe start must be finite".into()));
        }
        Ok(())
    }

    /// The sampling positions, in order from `start`.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let mag = (self.dir[0] * self.dir[0] + self.dir[1] * self.dir[1]).sqrt();
        let unit = [self.dir[0] / mag, self.dir[1] / mag];
        (0..self.n_points)
            .map(|i| {
                let s = self.length * i as f64 / (self.n_points - 1) as f64;
                [self.start[0] + s * unit[0], self.start[1] + s * unit[1]]
            })
            .collect()
    }
}

/// Reads a nodal field at every probe point by linear interpolation.
pub fn sample_line(mesh: &Mesh, field: &[f64], probe: &LineProbe) -> Result<Vec<f64>> {
    probe.validate()?;
    probe.points().iter().map(|&p| mesh.interpolate(field, p)).collect()
}

/// Mean squared difference between two reading series.
pub fn mean_square_difference(simulated: &[f64], reference: &[f64]) -> Result<f64> {
    if simulated.len() != reference.len() || simulated.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "cannot score {} simulated readings against {} reference readings",
            simulated.len(),
            reference.len()
        )));
    }
    let n = simulated.len() as f64;
    Ok(simulated
        .iter()
        .zip(reference)
        .map(|(s, r)| (s - r) * (s - r))
        .sum::<f64>()
        / n)
}

/// Nodes whose coordinates fall inside the closed axis-aligned box.
pub fn nodes_in_box(mesh: &Mesh, lo: [f64; 2], hi: [f64; 2]) -> Vec<usize> {
    mesh.nodes()
        .iter()
        .enumerate()
        .filter(|(_, p)| p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1])
        .map(|(i, _)| i)
        .collect()
}

/// Steady concentration under one diffusion coefficient: assembles the
/// operators, pins inflow nodes to zero plus the caller's fixed-value
/// nodes (which win where they overlap inflow), and solves the steady
/// balance driven by `load`.
pub fn steady_concentration(
    mesh: &Mesh,
    wind: &WindField,
    kappa: f64,
    load: &[f64],
    fixed: &[(usize, f64)],
) -> Result<Vec<f64>> {
    let ops = OperatorSet::assemble(mesh, wind, kappa)?;
    let mut dirichlet: Vec<(usize, f64)> = Vec::new();
    let pinned: std::collections::HashSet<usize> = fixed.iter().map(|&(i, _)| i).collect();
    for &i in &ops.inflow_nodes {
        if !pinned.contains(&i) {
            dirichlet.push((i, 0.0));
        }
    }
    dirichlet.extend_from_slice(fixed);
    solve_steady(&ops, load, &dirichlet)
}

/// Candidate coefficients spanning five decades, one value per decade.
pub fn default_kappa_grid() -> Vec<f64> {
    vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0]
}

/// Sweep outcome: per-candidate scores and the winning index.
#[derive(Debug, Clone)]
pub struct KappaSweep {
    pub kappa: Vec<f64>,
    pub pi: Vec<f64>,
    pub best_index: usize,
}

impl KappaSweep {
    pub fn best_kappa(&self) -> f64 {
        self.kappa[self.best_index]
    }

    pub fn best_pi(&self) -> f64 {
        self.pi[self.best_index]
    }
}

/// Runs the steady experiment for every candidate coefficient and scores
/// it against the reference probe readings. Candidates run in parallel;
/// results are ordered by the grid, and the winner is the lowest score
/// with ties broken toward the smaller coefficient.
pub fn sweep_kappa(
    mesh: &Mesh,
    wind: &WindField,
    load: &[f64],
    fixed: &[(usize, f64)],
    probe: &LineProbe,
    reference: &[f64],
    grid: &[f64],
) -> Result<KappaSweep> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty candidate grid".into()));
    }
    for &k in grid {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "diffusion candidates must be positive and finite, got {k}"
            )));
        }
    }
    if reference.len() != probe.n_points {
        return Err(Error::DimensionMismatch(format!(
            "{} reference readings for a {}-point probe",
            reference.len(),
            probe.n_points
        )));
    }

    let pi: Vec<f64> = grid
        .par_iter()
        .map(|&kappa| {
            let field = steady_concentration(mesh, wind, kappa, load, fixed)?;
            let sampled = sample_line(mesh, &field, probe)?;
            mean_square_difference(&sampled, reference)
        })
        .collect::<Result<_>>()?;

    let mut best_index = 0;
    for i in 1..grid.len() {
        let better = pi[i] < pi[best_index]
            || (pi[i] == pi[best_index] && grid[i] < grid[best_index]);
        if better {
            best_index = i;
        }
    }
    Ok(KappaSweep { kappa: grid.to_vec(), pi, best_index })
}
