//! Sensor readings: smooth space–time averaging of concentration fields,
//! plus synthetic measurement noise.
//!
//! Each sensor reading is a normalized weighted average of the field over a
//! compact bump around the sensor position and sample time. The bump is
//! separable — a spatial mollifier of radius `rho_x` times a temporal one of
//! radius `rho_t` — with a flat plateau over the inner `plateau` fraction of
//! each radius. Weights are nonnegative and normalized per reading so a
//! constant field is read back exactly, even when the bump is clipped by
//! the domain boundary or the ends of the time grid.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{Csr, SparseVec};
use crate::transport::{SpaceTimeField, TimeGrid};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Averaging-bump geometry shared by every reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpParams {
    /// Spatial radius: the bump vanishes beyond this distance.
    pub rho_x: f64,
    /// Temporal radius: the bump vanishes beyond this time offset.
    pub rho_t: f64,
    /// Fraction of each radius over which the bump is exactly flat, in (0, 1).
    pub plateau: f64,
}

impl BumpParams {
    pub fn new(rho_x: f64, rho_t: f64) -> Self {
        BumpParams { rho_x, rho_t, plateau: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("spatial radius", self.rho_x), ("temporal radius", self.rho_t)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.plateau > 0.0 && self.plateau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "plateau fraction must lie in (0, 1), got {}",
                self.plateau
            )));
        }
        Ok(())
    }
}

/// One-dimensional mollifier profile in the squared normalized offset
/// `s = (d/ρ)²`: equal to 1 on the plateau (`s ≤ plateau²`), 0 beyond the
/// radius (`s ≥ 1`), and a smooth bridge in between. The bridge argument is
/// squared so the profile leaves the plateau with zero slope — the profile
/// is continuously differentiable everywhere, including both edges.
pub fn mollifier(s: f64, plateau: f64) -> f64 {
    let p2 = plateau * plateau;
    if s <= p2 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let q = (s - p2) / (1.0 - p2);
        (1.0 - 1.0 / (1.0 - q * q)).exp()
    }
}

/// One reading's identity: which sensor, where, when.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleInfo {
    pub sensor: usize,
    pub pos: [f64; 2],
    pub t: f64,
}

#[derive(Debug, Clone)]
struct ObsRow {
    /// Nonzero temporal weights: (state level, trapezoid × mollifier).
    step_weights: Vec<(usize, f64)>,
    /// Mass-weighted nodal bump values (nonzero entries only).
    spatial: SparseVec,
    /// Reciprocal of the normalization (temporal sum × spatial sum).
    inv_norm: f64,
}

/// Linear map from space–time fields to sensor readings, one row per
/// (sensor, sample time) pair in sensor-major order. The transposed action
/// ([`Self::scatter`]) produces the load levels that drive adjoint marches.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    rows: Vec<ObsRow>,
    samples: Vec<SampleInfo>,
    n_nodes: usize,
    n_levels: usize,
}

impl ObservationOperator {
    /// Builds rows for every sensor × sample time. Sensor positions must
    /// lie in the mesh and sample times within the grid span; a bump too
    /// small for the mesh or grid to resolve (all weights zero) is an
    /// error. `mass` must be the mesh's P1 mass matrix: spatial weights are
    /// the mass-weighted nodal bump values, so a reading is the L2 average
    /// of the interpolated field against the interpolated bump.
    pub fn assemble(
        mesh: &Mesh,
        mass: &Csr,
        grid: &TimeGrid,
        sensors: &[[f64; 2]],
        sample_times: &[f64],
        params: &BumpParams,
    ) -> Result<Self> {
        params.validate()?;
        if sensors.is_empty() || sample_times.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one sensor and one sample time".into(),
            ));
        }
        let t_end = grid.final_time();
        for &t in sample_times {
            if !(t >= 0.0 && t <= t_end + 1e-12 * t_end.max(1.0)) {
                return Err(Error::InvalidParameter(format!(
                    "sample time {t} lies outside the march span [0, {t_end}]"
                )));
            }
        }

        let n_levels = grid.n_steps + 1;
        let mut rows = Vec::with_capacity(sensors.len() * sample_times.len());
        let mut samples = Vec::with_capacity(rows.capacity());

        for (sensor, &pos) in sensors.iter().enumerate() {
            if mesh.locate(pos).is_none() {
                return Err(Error::PointOutsideDomain(pos[0], pos[1]));
            }
            // Nodal interpolation of the spatial bump, then one mass
            // application: weights stay nonnegative because the mass matrix
            // has nonnegative entries and so does the bump.
            let bump: Vec<f64> = mesh
                .nodes()
                .iter()
                .map(|&p| {
                    let d2 = (p[0] - pos[0]).powi(2) + (p[1] - pos[1]).powi(2);
                    mollifier(d2 / (params.rho_x * params.rho_x), params.plateau)
                })
                .collect();
            let weighted = mass.matvec(&bump);
            let spatial_sum: f64 = weighted.iter().sum();
            if !(spatial_sum > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sensor at ({}, {}): spatial bump of radius {} is not resolved by the mesh",
                    pos[0], pos[1], params.rho_x
                )));
            }
            let spatial = SparseVec::from_dense_truncated(&weighted, 0.0);

            for &t_sample in sample_times {
                let mut step_weights = Vec::new();
                let mut temporal_sum = 0.0;
                for level in 0..n_levels {
                    let dt_off = grid.time(level) - t_sample;
                    let s = (dt_off / params.rho_t).powi(2);
                    let psi = mollifier(s, params.plateau);
                    if psi == 0.0 {
                        continue;
                    }
                    let trap = if level == 0 || level == n_levels - 1 {
                        0.5 * grid.dt
                    } else {
                        grid.dt
                    };
                    let w = trap * psi;
                    step_weights.push((level, w));
                    temporal_sum += w;
                }
                if !(temporal_sum > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "sample at t = {t_sample}: temporal bump of radius {} is not resolved \
                         by the time grid",
                        params.rho_t
                    )));
                }
                rows.push(ObsRow {
                    step_weights,
                    spatial: spatial.clone(),
                    inv_norm: 1.0 / (temporal_sum * spatial_sum),
                });
                samples.push(SampleInfo { sensor, pos, t: t_sample });
            }
        }

        Ok(ObservationOperator { rows, samples, n_nodes: mesh.n_nodes(), n_levels })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn samples(&self) -> &[SampleInfo] {
        &self.samples
    }

    /// Reads every sample from a marched field.
    pub fn apply(&self, states: &SpaceTimeField) -> Result<Vec<f64>> {
        if states.n_levels() < self.n_levels {
            return Err(Error::DimensionMismatch(format!(
                "field has {} levels, observations need {}",
                states.n_levels(),
                self.n_levels
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                for &(level, w) in &row.step_weights {
                    acc += w * row.spatial.dot(states.state(level));
                }
                acc * row.inv_norm
            })
            .collect())
    }

    /// Transposed action: spreads per-reading values back onto load levels,
    /// so that for any field u and values y,
    /// `⟨apply(u), y⟩ = Σ_levels ⟨u, scatter(y)⟩`.
    pub fn scatter(&self, values: &[f64], dt: f64) -> Result<SpaceTimeField> {
        if values.len() != self.rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} observation rows",
                values.len(),
                self.rows.len()
            )));
        }
        let mut loads = SpaceTimeField::zeros(dt, self.n_nodes, self.n_levels);
        for (row, &y) in self.rows.iter().zip(values) {
            if y == 0.0 {
                continue;
            }
            for &(level, w) in &row.step_weights {
                row.spatial.axpy_into(y * w * row.inv_norm, loads.state_mut(level));
            }
        }
        Ok(loads)
    }
}

/// Root-mean-square of a signal.
pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Noise level for clean readings: `rms / snr` when a signal-to-noise ratio
/// is given; otherwise a floor of 1e-3 × the peak reading, so noiseless
/// data still yields a well-posed misfit scale. All-zero readings fall back
/// to unit scale.
pub fn noise_sigma(clean: &[f64], snr: Option<f64>) -> Result<f64> {
    let peak = clean.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    match snr {
        Some(r) => {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "signal-to-noise ratio must be positive, got {r}"
                )));
            }
            let sigma = rms(clean) / r;
            Ok(if sigma > 0.0 { sigma } else { 1.0 })
        }
        None => Ok(if peak > 0.0 { 1e-3 * peak } else { 1.0 }),
    }
}

/// Adds seeded Gaussian noise of standard deviation `sigma` to readings.
/// The same seed gives bit-identical noise on every platform and run.
pub fn add_noise(clean: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + sigma * z
        })
        .collect()
}

/// Misfit loads for the inversion: `(predicted − measured) / σ²`.
pub fn misfit(predicted: &[f64], measured: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if predicted.len() != measured.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} measurements",
            predicted.len(),
            measured.len()
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be positive and finite, got {sigma}"
        )));
    }
    let inv = 1.0 / (sigma * sigma);
    Ok(predicted.iter().zip(measured).map(|(p, d)| (p - d) * inv).collect())
}
