//! Legacy-ASCII VTK export of meshes and nodal fields.
//!
//! Writes unstructured-grid files any standard visualization tool opens:
//! the triangulation as cells of type 5, node coordinates as points, and
//! any number of named nodal scalar fields. Numbers are printed with
//! shortest round-trip formatting so files are byte-reproducible.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::transport::SpaceTimeField;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Renders one dataset: the mesh plus named nodal scalar fields.
pub fn vtk_string(mesh: &Mesh, scalars: &[(&str, &[f64])], title: &str) -> Result<String> {
    let n = mesh.n_nodes();
    for (name, values) in scalars {
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "field \"{name}\" has {} values for {n} nodes",
                values.len()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidParameter(format!(
                "field name {name:?} must be non-empty without whitespace"
            )));
        }
    }
    let title_line = if title.is_empty() { "dataset" } else { title };
    if title_line.contains('\n') || title_line.len() > 255 {
        return Err(Error::InvalidParameter(
            "title must be a single line of at most 255 characters".into(),
        ));
    }

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title_line);
    out.push('\n');
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    writeln!(out, "POINTS {n} double").unwrap();
    for p in mesh.nodes() {
        writeln!(out, "{} {} 0", p[0], p[1]).unwrap();
    }

    let m = mesh.n_triangles();
    writeln!(out, "CELLS {m} {}", 4 * m).unwrap();
    for tri in mesh.triangles() {
        writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        out.push_str("5\n");
    }

    if !scalars.is_empty() {
        writeln!(out, "POINT_DATA {n}").unwrap();
        for (name, values) in scalars {
            writeln!(out, "SCALARS {name} double 1").unwrap();
            out.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                writeln!(out, "{v}").unwrap();
            }
        }
    }
    Ok(out)
}

/// Writes one dataset to a file.
pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    scalars: &[(&str, &[f64])],
    title: &str,
) -> Result<()> {
    let content = vtk_string(mesh, scalars, title)?;
    std::fs::write(path, content)?;
    Ok(())
}

/// Writes every level of a marched field as `<stem>_<level>.vtk` in `dir`,
/// with the level number zero-padded to a fixed width. Returns the paths
/// written, in level order.
pub fn write_vtk_series(
    dir: &Path,
    stem: &str,
    mesh: &Mesh,
    field: &SpaceTimeField,
    scalar_name: &str,
) -> Result<Vec<PathBuf>> {
    if stem.is_empty() {
        return Err(Error::InvalidParameter("series stem must be non-empty".into()));
    }
    let levels = field.n_levels();
    let width = levels.saturating_sub(1).to_string().len().max(4);
    let mut paths = Vec::with_capacity(levels);
    for level in 0..levels {
        let path = dir.join(format!("{stem}_{level:0width$}.vtk"));
        let title = format!("{stem} level {level}");
        write_vtk(&path, mesh, &[(scalar_name, field.state(level))], &title)?;
        paths.push(path);
    }
    Ok(paths)
}
