//! Emission sources: a radial release profile, its finite-element
//! projections, and moving-source descriptions.
//!
//! A release at point c deposits material with the capped-Gaussian profile
//! `ω(y) = min(cap, eps^(‖y−c‖²/r²))`: flat at `cap` near the center,
//! decayed to `eps` at distance `r`, and truncated to zero where it falls
//! below `trunc_tol`. Sources are represented nodally by the mass-projected
//! profile `ŵ = M⁻¹ b`, where `b` is the profile's load vector; the load
//! vectors themselves, one per mesh node, form the basis used by the
//! inversion's dual certificates.

use crate::error::{Error, Result};
use crate::fem::QUAD_DEG4;
use crate::mesh::Mesh;
use crate::sparse::SparseVec;
use crate::transport::{SourceField, TimeGrid, TransportSolver};
use rayon::prelude::*;

/// Capped radial release profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceShape {
    /// Distance at which the profile has decayed to `eps`.
    pub radius: f64,
    /// Decay level at `radius`; at `2·radius` the profile is `eps⁴`.
    pub eps: f64,
    /// Plateau value at the center.
    pub cap: f64,
    /// Values below this are truncated to zero (compact support).
    pub trunc_tol: f64,
}

impl SourceShape {
    /// Shape of the given radius with standard decay (`eps` 1e-3), plateau
    /// (`cap` 0.5), and truncation (1e-10).
    pub fn new(radius: f64) -> Self {
        SourceShape { radius, eps: 1e-3, cap: 0.5, trunc_tol: 1e-10 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "source radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "decay level must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.cap > 0.0 && self.cap <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "plateau value must lie in (0, 1], got {}",
                self.cap
            )));
        }
        if !(self.trunc_tol > 0.0 && self.trunc_tol < self.cap) {
            return Err(Error::InvalidParameter(format!(
                "truncation level must lie in (0, cap), got {}",
                self.trunc_tol
            )));
        }
        Ok(())
    }

    /// Profile value at `p` for a release centered at `center`, without
    /// truncation.
    pub fn value(&self, center: [f64; 2], p: [f64; 2]) -> f64 {
        let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
        let w = (self.eps.ln() * d2 / (self.radius * self.radius)).exp();
        w.min(self.cap)
    }

    /// Profile value with compact support: zero beyond
    /// [`Self::support_radius`].
    pub fn truncated_value(&self, center: [f64; 2], p: [f64; 2]) -> f64 {
        let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
        let r_sup = self.support_radius();
        if d2 > r_sup * r_sup {
            0.0
        } else {
            self.value(center, p)
        }
    }

    /// Radius beyond which the (untruncated) profile is below `trunc_tol`.
    pub fn support_radius(&self) -> f64 {
        self.radius * (self.trunc_tol.ln() / self.eps.ln()).sqrt()
    }

    /// Radius of the flat plateau where the profile sits at `cap`.
    pub fn plateau_radius(&self) -> f64 {
        self.radius * (self.cap.ln() / self.eps.ln()).sqrt()
    }

    /// Exact integral of the untruncated profile over the plane:
    /// the plateau disc contributes `π d_c² cap` and the Gaussian skirt
    /// `π r² cap / β`, with `β = ln(1/eps)` and `d_c` the plateau radius.
    pub fn total_integral(&self) -> f64 {
        let beta = -self.eps.ln();
        std::f64::consts::PI * self.radius * self.radius * self.cap / beta
            * ((1.0 / self.cap).ln() + 1.0)
    }
}

/// Load vector of a release profile: `b_i = ∫ ω(y) φ_i(y) dy` by degree-4
/// quadrature over the elements meeting the profile's support.
pub fn shape_load_vector(mesh: &Mesh, shape: &SourceShape, center: [f64; 2]) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_nodes()];
    let r_sup = shape.support_radius();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let centroid = mesh.triangle_centroid(t);
        let reach = r_sup + mesh.triangle_diameter(t);
        let d2 = (centroid[0] - center[0]).powi(2) + (centroid[1] - center[1]).powi(2);
        if d2 > reach * reach {
            continue;
        }
        let coords = mesh.triangle_coords(t);
        let area = mesh.triangle_area(t);
        for (bary, w) in QUAD_DEG4 {
            let p = [
                bary[0] * coords[0][0] + bary[1] * coords[1][0] + bary[2] * coords[2][0],
                bary[0] * coords[0][1] + bary[1] * coords[1][1] + bary[2] * coords[2][1],
            ];
            let omega = shape.truncated_value(center, p);
            if omega == 0.0 {
                continue;
            }
            for v in 0..3 {
                load[tri[v]] += area * w * omega * bary[v];
            }
        }
    }
    load
}

/// Nodal release profile `ŵ = M⁻¹ b` for a release centered at `center`.
pub fn project_shape(
    solver: &TransportSolver,
    mesh: &Mesh,
    shape: &SourceShape,
    center: [f64; 2],
) -> Result<Vec<f64>> {
    let load = shape_load_vector(mesh, shape, center);
    solver.mass_solve(&load)
}

/// One load vector per mesh node, stored sparse: row `j` is the load of a
/// release centered at node `j`. Row `j` dotted with a nodal field `z`
/// equals `⟨ŵ_j, z⟩` in the mass inner product, which is what the
/// inversion's dual certificate evaluates.
#[derive(Debug, Clone)]
pub struct ShapeBasis {
    rows: Vec<SparseVec>,
    n_nodes: usize,
}

impl ShapeBasis {
    /// Assembles all rows. Rows are independent, so they are computed in
    /// parallel; the result is identical for any thread count.
    pub fn assemble(mesh: &Mesh, shape: &SourceShape) -> Result<Self> {
        shape.validate()?;
        let rows: Vec<SparseVec> = (0..mesh.n_nodes())
            .into_par_iter()
            .map(|j| {
                let load = shape_load_vector(mesh, shape, mesh.node(j));
                SparseVec::from_dense_truncated(&load, 0.0)
            })
            .collect();
        Ok(ShapeBasis { rows, n_nodes: mesh.n_nodes() })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn row(&self, j: usize) -> &SparseVec {
        &self.rows[j]
    }

    /// All row dot products with `z` at once: `out[j] = b_j · z`.
    pub fn apply_all(&self, z: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.dot(z)).collect()
    }

    /// Dense load vector of row `j`.
    pub fn dense_row(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        self.rows[j].axpy_into(1.0, &mut out);
        out
    }
}

/// A single release event the inversion reconstructs: a release profile
/// centered at mesh node `node`, active during time step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub step: usize,
    pub node: usize,
}

/// Expands weighted atoms into a nodal source over `n_steps` steps, using
/// the basis for load vectors and the solver's mass factorization for
/// projection.
pub fn atoms_to_source(
    solver: &TransportSolver,
    basis: &ShapeBasis,
    atoms: &[Atom],
    weights: &[f64],
    n_steps: usize,
) -> Result<SourceField> {
    if atoms.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} atoms but {} weights",
            atoms.len(),
            weights.len()
        )));
    }
    let n = basis.n_nodes();
    let mut source = SourceField::zeros(n, n_steps);
    for (atom, &w) in atoms.iter().zip(weights) {
        if atom.step >= n_steps {
            return Err(Error::InvalidParameter(format!(
                "atom at step {} outside the {n_steps}-step window",
                atom.step
            )));
        }
        let profile = solver.mass_solve(&basis.dense_row(atom.node))?;
        source.accumulate(atom.step, &profile, w);
    }
    Ok(source)
}

/// Waypoint of a moving release: position and intensity at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub pos: [f64; 2],
    pub intensity: f64,
}

/// Piecewise-linear moving release: position and intensity interpolate
/// between waypoints; the release is inactive outside the waypoint span.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePath {
    points: Vec<PathPoint>,
}

impl SourcePath {
    pub fn new(points: Vec<PathPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("path needs at least one waypoint".into()));
        }
        for pair in points.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::InvalidParameter(format!(
                    "waypoint times must strictly increase, got {} then {}",
                    pair[0].t, pair[1].t
                )));
            }
        }
        for p in &points {
            if !(p.intensity >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "intensity must be nonnegative, got {}",
                    p.intensity
                )));
            }
        }
        Ok(SourcePath { points })
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    /// Position and intensity at time `t`, or `None` outside the active span.
    pub fn at(&self, t: f64) -> Option<([f64; 2], f64)> {
        let (first, last) = (self.points.first()?, self.points.last()?);
        if t < first.t || t > last.t {
            return None;
        }
        let seg = self.points.windows(2).find(|w| t <= w[1].t);
        match seg {
            Some(w) => {
                let s = (t - w[0].t) / (w[1].t - w[0].t);
                let pos = [
                    w[0].pos[0] + s * (w[1].pos[0] - w[0].pos[0]),
                    w[0].pos[1] + s * (w[1].pos[1] - w[0].pos[1]),
                ];
                let intensity = w[0].intensity + s * (w[1].intensity - w[0].intensity);
                Some((pos, intensity))
            }
            None => Some((last.pos, last.intensity)),
        }
    }
}

/// Discretizes a moving release onto the time grid: step `n` carries the
/// intensity-scaled projected profile at the step's start time `n·dt`.
pub fn path_source(
    solver: &TransportSolver,
    mesh: &Mesh,
    shape: &SourceShape,
    path: &SourcePath,
    grid: &TimeGrid,
) -> Result<SourceField> {
    shape.validate()?;
    let mut source = SourceField::zeros(mesh.n_nodes(), grid.n_steps);
    for step in 0..grid.n_steps {
        if let Some((pos, intensity)) = path.at(grid.time(step)) {
            if intensity == 0.0 {
                continue;
            }
            let profile = project_shape(solver, mesh, shape, pos)?;
            source.accumulate(step, &profile, intensity);
        }
    }
    Ok(source)
}
