//! P1 finite-element operators for advection–diffusion transport.
//!
//! Assembles, on a shared sparsity pattern, the mass, stiffness, convection,
//! and streamline-derivative matrices of linear triangle elements, plus
//! streamline-upwind (SUPG) variants weighted by a per-element stabilization
//! time τ_E. Wind is frozen at each element centroid; diffusion is a single
//! scalar κ. The shared pattern lets callers combine and transpose these
//! operators entry-by-entry without any re-summation.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{Csr, Pattern};
use crate::wind::{self, WindField};
use std::sync::Arc;

/// Gradients of the three P1 shape functions on a CCW triangle, and its
/// area. Gradient of shape function `i` is `(b_i, c_i) / (2 area)` with
/// `b_i = y_j − y_k`, `c_i = x_k − x_j` over the cyclic vertex order.
pub fn p1_gradients(coords: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let [p0, p1, p2] = *coords;
    let area = 0.5
        * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
    let inv = 1.0 / (2.0 * area);
    let grads = [
        [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
        [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
        [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
    ];
    (grads, area)
}

/// Six-point triangle quadrature rule, exact for polynomials of degree 4:
/// (barycentric coordinates, weight), weights summing to 1. Multiply by the
/// element area to integrate.
pub const QUAD_DEG4: [([f64; 3], f64); 6] = [
    (
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        0.223381589678011,
    ),
    (
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        0.109951743655322,
    ),
];

/// L2 norm of the difference between the P1 interpolant of `nodal` and a
/// reference function, by degree-4 quadrature element by element.
pub fn l2_difference(mesh: &Mesh, nodal: &[f64], reference: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let coords = mesh.triangle_coords(t);
        let area = mesh.triangle_area(t);
        for (bary, w) in QUAD_DEG4 {
            let p = [
                bary[0] * coords[0][0] + bary[1] * coords[1][0] + bary[2] * coords[2][0],
                bary[0] * coords[0][1] + bary[1] * coords[1][1] + bary[2] * coords[2][1],
            ];
            let uh = bary[0] * nodal[tri[0]] + bary[1] * nodal[tri[1]] + bary[2] * nodal[tri[2]];
            let d = uh - reference(p);
            total += area * w * d * d;
        }
    }
    total.sqrt()
}

/// Per-element stabilization time: `min(h²/(2κ), h/‖v‖)` with `h` the
/// element diameter. In still air only the diffusive limit applies.
pub fn stabilization_tau(h: f64, kappa: f64, speed: f64) -> f64 {
    let diffusive = h * h / (2.0 * kappa);
    if speed > 0.0 {
        diffusive.min(h / speed)
    } else {
        diffusive
    }
}

/// The element-assembled transport operators, all sharing one pattern.
///
/// For nodal coefficient vectors `a`, `b` and the P1 interpolants they
/// induce, the entries integrate over the domain:
///
/// - `mass`: product of shape functions,
/// - `stiffness`: inner product of shape gradients,
/// - `convection`: test function times wind-directional trial derivative,
/// - `streamline`: product of wind-directional derivatives of both,
///
/// and `convection_tau` / `streamline_tau` are the same element integrals
/// scaled by that element's τ_E.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pattern: Arc<Pattern>,
    pub mass: Csr,
    pub stiffness: Csr,
    pub convection: Csr,
    pub streamline: Csr,
    pub convection_tau: Csr,
    pub streamline_tau: Csr,
    /// Stabilization time of each element, in mesh order.
    pub tau: Vec<f64>,
    pub kappa: f64,
    /// Nodes on inflow-tagged boundary edges, ascending.
    pub inflow_nodes: Vec<usize>,
}

impl OperatorSet {
    /// Assembles all operators over `mesh` with the given wind and diffusion
    /// coefficient. The mesh boundary must already be classified against a
    /// wind field, and `kappa` must be positive and finite. Assembly is
    /// sequential and element-ordered, so repeated calls with identical
    /// inputs produce bit-identical matrices.
    pub fn assemble(mesh: &Mesh, wind: &WindField, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "diffusion coefficient must be positive and finite, got {kappa}"
            )));
        }
        wind.validate_len(mesh.n_nodes())?;
        let inflow_nodes = mesh.inflow_nodes()?;

        let n = mesh.n_nodes();
        let pairs = mesh.triangles().iter().flat_map(|tri| {
            let t = *tri;
            (0..3).flat_map(move |i| (0..3).map(move |j| (t[i], t[j])))
        });
        let pattern = Arc::new(Pattern::from_pairs(n, pairs));

        let mut mass = Csr::zeros(pattern.clone());
        let mut stiffness = Csr::zeros(pattern.clone());
        let mut convection = Csr::zeros(pattern.clone());
        let mut streamline = Csr::zeros(pattern.clone());
        let mut convection_tau = Csr::zeros(pattern.clone());
        let mut streamline_tau = Csr::zeros(pattern.clone());
        let mut tau = Vec::with_capacity(mesh.n_triangles());

        for (t, tri) in mesh.triangles().iter().enumerate() {
            let coords = mesh.triangle_coords(t);
            let (grads, area) = p1_gradients(&coords);
            let vc = wind.at_combination(&coords, tri);
            let speed = wind::norm(vc);
            let h = mesh.triangle_diameter(t);
            let tau_e = stabilization_tau(h, kappa, speed);
            tau.push(tau_e);

            // Wind-directional derivative of each shape function.
            let dv = [
                grads[0][0] * vc[0] + grads[0][1] * vc[1],
                grads[1][0] * vc[0] + grads[1][1] * vc[1],
                grads[2][0] * vc[0] + grads[2][1] * vc[1],
            ];

            for i in 0..3 {
                for j in 0..3 {
                    let (gi, gj) = (tri[i], tri[j]);
                    let m = if i == j { area / 6.0 } else { area / 12.0 };
                    let k = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                    let v = area / 3.0 * dv[j];
                    let s = area * dv[i] * dv[j];
                    mass.add(gi, gj, m);
                    stiffness.add(gi, gj, k);
                    convection.add(gi, gj, v);
                    streamline.add(gi, gj, s);
                    convection_tau.add(gi, gj, tau_e * v);
                    streamline_tau.add(gi, gj, tau_e * s);
                }
            }
        }

        Ok(OperatorSet {
            pattern,
            mass,
            stiffness,
            convection,
            streamline,
            convection_tau,
            streamline_tau,
            tau,
            kappa,
            inflow_nodes,
        })
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }
}

/// Element-wise divergence of the P1 interpolant of `wind` (constant per
/// element). A diagnostic: the transport scheme stays conservative in the
/// discrete sense regardless, but strongly divergent winds distort physical
/// interpretation of concentration mass.
pub fn wind_divergence(mesh: &Mesh, wind: &WindField) -> Result<Vec<f64>> {
    wind.validate_len(mesh.n_nodes())?;
    let mut out = Vec::with_capacity(mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let coords = mesh.triangle_coords(t);
        let (grads, _) = p1_gradients(&coords);
        let mut div = 0.0;
        for i in 0..3 {
            let vi = wind.at_combination(&[coords[i]], &[tri[i]]);
            div += vi[0] * grads[i][0] + vi[1] * grads[i][1];
        }
        out.push(div);
    }
    Ok(out)
}
