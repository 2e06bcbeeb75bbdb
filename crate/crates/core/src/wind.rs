//! Wind (advection velocity) fields.
//!
//! A field is either a sum of named analytic models or a per-node vector
//! table. Evaluation goes through [`WindField::at_combination`], which takes
//! the vertex coordinates and vertex indices of the entity being integrated
//! (triangle for assembly, edge for boundary classification): analytic models
//! are evaluated at the vertex mean (the centroid or midpoint), nodal tables
//! are averaged over the vertex indices — i.e. the P1 interpolant at the same
//! point. This keeps the module independent of the mesh type.

use crate::error::{Error, Result};

/// One analytic wind component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindModel {
    /// Constant velocity (vx, vy).
    Uniform { vx: f64, vy: f64 },
    /// Rigid rotation about a center: v = strength · (−(y − cy), x − cx).
    Vortex { cx: f64, cy: f64, strength: f64 },
    /// Horizontal shear: v = (rate · y, 0).
    Shear { rate: f64 },
}

impl WindModel {
    pub fn at(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            WindModel::Uniform { vx, vy } => [vx, vy],
            WindModel::Vortex { cx, cy, strength } => {
                [-strength * (p[1] - cy), strength * (p[0] - cx)]
            }
            WindModel::Shear { rate } => [rate * p[1], 0.0],
        }
    }
}

/// A velocity field over the domain.
#[derive(Debug, Clone)]
pub enum WindField {
    /// Sum of analytic components (empty sum = still air).
    Analytic(Vec<WindModel>),
    /// One velocity vector per mesh node; evaluated by P1 interpolation.
    Nodal(Vec<[f64; 2]>),
}

impl WindField {
    pub fn still() -> Self {
        WindField::Analytic(Vec::new())
    }

    pub fn uniform(vx: f64, vy: f64) -> Self {
        WindField::Analytic(vec![WindModel::Uniform { vx, vy }])
    }

    /// Evaluates an analytic field at a point. Errors for nodal fields,
    /// which are only defined through their mesh.
    pub fn at_point(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        match self {
            WindField::Analytic(models) => Ok(models
                .iter()
                .fold([0.0, 0.0], |acc, m| add(acc, m.at(p)))),
            WindField::Nodal(_) => Err(Error::InvalidParameter(
                "nodal wind field has no off-mesh point evaluation".into(),
            )),
        }
    }

    /// Velocity associated with a mesh entity given by its vertex coordinates
    /// and vertex indices: the analytic value at the vertex mean, or the mean
    /// of the nodal vectors (both equal the P1 interpolant at that point).
    pub fn at_combination(&self, coords: &[[f64; 2]], idxs: &[usize]) -> [f64; 2] {
        debug_assert_eq!(coords.len(), idxs.len());
        debug_assert!(!coords.is_empty());
        match self {
            WindField::Analytic(models) => {
                let inv = 1.0 / coords.len() as f64;
                let mean = coords
                    .iter()
                    .fold([0.0, 0.0], |acc, p| add(acc, *p))
                    .map(|c| c * inv);
                models.iter().fold([0.0, 0.0], |acc, m| add(acc, m.at(mean)))
            }
            WindField::Nodal(table) => {
                let inv = 1.0 / idxs.len() as f64;
                idxs.iter()
                    .fold([0.0, 0.0], |acc, &i| add(acc, table[i]))
                    .map(|c| c * inv)
            }
        }
    }

    /// Checks a nodal table against the mesh size.
    pub fn validate_len(&self, n_nodes: usize) -> Result<()> {
        if let WindField::Nodal(table) = self {
            if table.len() != n_nodes {
                return Err(Error::DimensionMismatch(format!(
                    "nodal wind table has {} entries for {} mesh nodes",
                    table.len(),
                    n_nodes
                )));
            }
        }
        Ok(())
    }
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}
