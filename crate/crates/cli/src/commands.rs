//! The four subcommands: mesh preparation, forward simulation, source
//! inversion, and diffusivity calibration.
//!
//! Every command writes a manifest (the resolved configuration, itself a
//! valid `--config` input), a machine-readable `report.json`, and its
//! tabular outputs into the configured output directory. Nothing written
//! depends on wall-clock time or thread count.

use crate::config::{manifest_text, Config};
use crate::tables::{
    self, measurements_to_data, read_measurements, read_reading_series, write_measurements,
    write_readings, write_score_table, ReadingSeries,
};
use anyhow::{anyhow, bail, Context, Result};
use plumetrace_core::calibration::{
    default_kappa_grid, mean_square_difference, nodes_in_box, sample_line, steady_concentration,
    sweep_kappa, LineProbe,
};
use plumetrace_core::pdap::{pdap_run, predict, PdapConfig, PdapReport};
use plumetrace_core::sensing::{add_noise, misfit, noise_sigma, rms};
use plumetrace_core::source::{atoms_to_source, path_source};
use plumetrace_core::transport::{SourceField, SpaceTimeField, TimeGrid};
use plumetrace_core::vtk::{write_vtk, write_vtk_series};
use serde::Serialize;
use std::path::{Path, PathBuf};

fn write_manifest(out_dir: &Path, config: &Config, command: &str) -> Result<()> {
    let text = manifest_text(config, command)?;
    std::fs::write(out_dir.join("manifest.toml"), text)?;
    Ok(())
}

fn write_report<T: Serialize>(out_dir: &Path, report: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(out_dir.join("report.json"), text)?;
    Ok(())
}

fn prepare_out_dir(config: &Config) -> Result<PathBuf> {
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct MeshReport {
    nodes: usize,
    triangles: usize,
    boundary_edges: usize,
    inflow_nodes: usize,
    area: f64,
}

/// Builds (or loads) the mesh, classifies its boundary against the wind,
/// and writes it out for inspection and reuse.
pub fn run_mesh(config: &Config) -> Result<()> {
    let out_dir = prepare_out_dir(config)?;
    let (mesh, _wind) = config.build_mesh_and_wind()?;
    mesh.save(&out_dir.join("mesh.txt"))?;
    if config.output.vtk {
        write_vtk(&out_dir.join("mesh.vtk"), &mesh, &[], "mesh")?;
    }
    write_manifest(&out_dir, config, "mesh")?;
    write_report(
        &out_dir,
        &MeshReport {
            nodes: mesh.n_nodes(),
            triangles: mesh.n_triangles(),
            boundary_edges: mesh.boundary_edges().len(),
            inflow_nodes: mesh.inflow_nodes()?.len(),
            area: mesh.total_area(),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    readings: usize,
    rms_clean: f64,
    sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    observation_steps: usize,
    horizon_steps: usize,
}

/// Marches the configured release forward and records what the sensors
/// would measure, optionally with synthetic noise.
pub fn run_simulate(config: &Config) -> Result<()> {
    let out_dir = prepare_out_dir(config)?;
    let (mesh, _wind, stack) = config.build_stack()?;
    let path = config.truth_path()?;
    let horizon = config.horizon_steps();
    let horizon_grid = TimeGrid::new(config.time.dt, horizon)?;
    let shape = config.source_shape();

    let source = path_source(&stack.solver, &mesh, &shape, &path, &horizon_grid)?;
    let states = stack.solver.solve_forward(&source, horizon)?;
    let clean = stack.obs.apply(&states)?;

    let snr = config.noise.as_ref().and_then(|n| n.snr);
    let sigma = noise_sigma(&clean, snr)?;
    let (data, seed) = match (snr, config.noise.as_ref()) {
        (Some(_), Some(noise)) => (add_noise(&clean, sigma, noise.seed), Some(noise.seed)),
        _ => (clean.clone(), None),
    };

    write_measurements(&out_dir.join("measurements.csv"), stack.obs.samples(), &data)?;
    if config.output.vtk {
        write_vtk_series(&out_dir, "concentration", &mesh, &states, "concentration")?;
        write_vtk_series(
            &out_dir,
            "source",
            &mesh,
            &source_as_states(&source, config.time.dt),
            "source",
        )?;
    }
    write_manifest(&out_dir, config, "simulate")?;
    write_report(
        &out_dir,
        &SimulateReport {
            readings: data.len(),
            rms_clean: rms(&clean),
            sigma,
            snr,
            seed,
            observation_steps: config.time.observation_steps,
            horizon_steps: horizon,
        },
    )?;
    Ok(())
}

fn source_as_states(source: &SourceField, dt: f64) -> SpaceTimeField {
    let states: Vec<Vec<f64>> = (0..source.n_steps())
        .map(|n| {
            source
                .step(n)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; source.n_nodes()])
        })
        .collect();
    SpaceTimeField::new(dt, states)
}

#[derive(Serialize)]
struct AtomReport {
    step: usize,
    t: f64,
    node: usize,
    x: f64,
    y: f64,
    weight: f64,
}

#[derive(Serialize)]
struct HistoryReport {
    objective: f64,
    misfit_norm: f64,
    max_dual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    inserted_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inserted_node: Option<usize>,
    pruned: usize,
}

#[derive(Serialize)]
struct InvertReport {
    converged: bool,
    iterations: usize,
    alpha: f64,
    sigma: f64,
    data_norm: f64,
    misfit_norm: f64,
    lasso_kkt: f64,
    atoms: Vec<AtomReport>,
    history: Vec<HistoryReport>,
}

/// Fits release events to measured readings and forecasts the plume over
/// the configured horizon. A run that stops at the iteration cap still
/// writes its report (with `converged: false`) and succeeds.
pub fn run_invert(config: &Config, measurements: Option<&Path>) -> Result<()> {
    let out_dir = prepare_out_dir(config)?;
    let (mesh, _wind, stack) = config.build_stack()?;

    let default_path = out_dir.join("measurements.csv");
    let measurements_path = measurements.unwrap_or(&default_path);
    let rows = read_measurements(measurements_path)?;
    let data = measurements_to_data(&rows, stack.obs.samples())?;

    let snr = config.noise.as_ref().and_then(|n| n.snr);
    let sigma = noise_sigma(&data, snr)?;

    let section = config.pdap.as_ref().ok_or_else(|| anyhow!("[pdap] section required"))?;
    let mut pdap_config = PdapConfig::new(section.alpha);
    if let Some(m) = section.max_iterations {
        pdap_config.max_iterations = m;
    }
    if let Some(tol) = section.insert_tolerance {
        pdap_config.insert_tolerance = Some(tol);
    }
    if let Some(r) = section.prune_ratio {
        pdap_config.prune_ratio = r;
    }

    let report = pdap_run(&stack, &data, sigma, &pdap_config)?;

    write_measurements(&out_dir.join("predictions.csv"), stack.obs.samples(), &report.predicted)?;
    let horizon = config.horizon_steps();
    let forecast = predict(&stack, &report.atoms, &report.weights, horizon)?;
    if config.output.vtk {
        write_vtk_series(&out_dir, "concentration", &mesh, &forecast, "concentration")?;
        let source =
            atoms_to_source(&stack.solver, &stack.basis, &report.atoms, &report.weights, horizon)?;
        write_vtk_series(
            &out_dir,
            "source",
            &mesh,
            &source_as_states(&source, config.time.dt),
            "source",
        )?;
        let residual = misfit(&report.predicted, &data, sigma)?;
        let loads = stack.obs.scatter(&residual, config.time.dt)?;
        let adjoint = stack.solver.solve_adjoint(&loads)?;
        write_vtk_series(&out_dir, "adjoint", &mesh, &adjoint, "adjoint")?;
    }
    write_manifest(&out_dir, config, "invert")?;

    let data_norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let misfit_norm = report
        .predicted
        .iter()
        .zip(&data)
        .map(|(p, d)| (p - d) * (p - d))
        .sum::<f64>()
        .sqrt();
    write_report(&out_dir, &invert_report(config, &report, sigma, data_norm, misfit_norm, &mesh))?;
    Ok(())
}

fn invert_report(
    config: &Config,
    report: &PdapReport,
    sigma: f64,
    data_norm: f64,
    misfit_norm: f64,
    mesh: &plumetrace_core::mesh::Mesh,
) -> InvertReport {
    let atoms = report
        .atoms
        .iter()
        .zip(&report.weights)
        .map(|(atom, &weight)| {
            let pos = mesh.node(atom.node);
            AtomReport {
                step: atom.step,
                t: atom.step as f64 * config.time.dt,
                node: atom.node,
                x: pos[0],
                y: pos[1],
                weight,
            }
        })
        .collect();
    let history = report
        .history
        .iter()
        .map(|h| HistoryReport {
            objective: h.objective,
            misfit_norm: h.misfit_norm,
            max_dual: h.max_dual,
            inserted_step: h.inserted.map(|a| a.step),
            inserted_node: h.inserted.map(|a| a.node),
            pruned: h.pruned,
        })
        .collect();
    InvertReport {
        converged: report.converged,
        iterations: report.iterations,
        alpha: config.pdap.as_ref().map(|p| p.alpha).unwrap_or(f64::NAN),
        sigma,
        data_norm,
        misfit_norm,
        lasso_kkt: report.lasso_kkt,
        atoms,
        history,
    }
}

#[derive(Serialize)]
struct CalibrateReport {
    best_kappa: f64,
    best_pi: f64,
    reference: String,
    kappa: Vec<f64>,
    pi: Vec<f64>,
}

/// Sweeps candidate diffusion coefficients against reference line
/// readings — supplied as a file, or generated from `reference_kappa`.
pub fn run_calibrate(config: &Config, readings: Option<&Path>) -> Result<()> {
    let out_dir = prepare_out_dir(config)?;
    let section = config
        .calibration
        .as_ref()
        .ok_or_else(|| anyhow!("[calibration] section required"))?;
    let (mesh, wind) = config.build_mesh_and_wind()?;

    let patch = &section.patch;
    let fixed: Vec<(usize, f64)> =
        nodes_in_box(&mesh, [patch.x0, patch.y0], [patch.x1, patch.y1])
            .into_iter()
            .map(|i| (i, patch.value))
            .collect();
    if fixed.is_empty() {
        bail!("[calibration.patch] box contains no mesh nodes");
    }
    let line = &section.line;
    let probe = LineProbe::new([line.x, line.y], [line.dx, line.dy], line.length, line.points)?;
    let load = vec![0.0; mesh.n_nodes()];

    let (reference, reference_origin) = match readings {
        Some(path) => (read_reading_series(path, "reference")?, "file".to_string()),
        None => {
            let kappa = section.reference_kappa.ok_or_else(|| {
                anyhow!(
                    "[calibration] reference_kappa required when no readings file is given"
                )
            })?;
            let field = steady_concentration(&mesh, &wind, kappa, &load, &fixed)?;
            (sample_line(&mesh, &field, &probe)?, "generated".to_string())
        }
    };
    if reference.len() != probe.n_points {
        bail!(
            "reference has {} readings, the probe takes {}",
            reference.len(),
            probe.n_points
        );
    }

    let grid = section.kappa_grid.clone().unwrap_or_else(default_kappa_grid);
    let sweep = sweep_kappa(&mesh, &wind, &load, &fixed, &probe, &reference, &grid)?;

    let points = probe.points();
    let mut sampled: Vec<(String, Vec<f64>)> = Vec::new();
    for &kappa in &grid {
        let field = steady_concentration(&mesh, &wind, kappa, &load, &fixed)?;
        let values = sample_line(&mesh, &field, &probe)?;
        debug_assert_eq!(
            mean_square_difference(&values, &reference)?,
            sweep.pi[sampled.len()]
        );
        sampled.push((format!("kappa={}", tables::fmt(kappa)), values));
    }
    let mut series = vec![ReadingSeries { name: "reference".into(), values: &reference }];
    for (name, values) in &sampled {
        series.push(ReadingSeries { name: name.clone(), values });
    }
    write_readings(&out_dir.join("readings.csv"), &points, &series)?;
    write_score_table(&out_dir.join("pi.csv"), &sweep.kappa, "reference", &sweep.pi)?;
    write_manifest(&out_dir, config, "calibrate")?;
    write_report(
        &out_dir,
        &CalibrateReport {
            best_kappa: sweep.best_kappa(),
            best_pi: sweep.best_pi(),
            reference: reference_origin,
            kappa: sweep.kappa.clone(),
            pi: sweep.pi.clone(),
        },
    )?;
    Ok(())
}
