//! Tabular input/output: measurement and reading CSV files.
//!
//! Every number is written with the shortest representation that parses
//! back to the same value, so repeated runs produce byte-identical files.

use anyhow::{anyhow, bail, Context, Result};
use plumetrace_core::sensing::SampleInfo;
use std::path::Path;

/// Formats a float with shortest round-trip precision.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes sensor measurements: one row per reading, sensor-major, with
/// the sensor's position and the reading's time center.
pub fn write_measurements(path: &Path, samples: &[SampleInfo], values: &[f64]) -> Result<()> {
    if samples.len() != values.len() {
        bail!("{} samples but {} values", samples.len(), values.len());
    }
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["sensor_id", "x", "y", "t", "value"])?;
    for (sample, &value) in samples.iter().zip(values) {
        writer.write_record([
            sample.sensor.to_string(),
            fmt(sample.pos[0]),
            fmt(sample.pos[1]),
            fmt(sample.t),
            fmt(value),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// One parsed measurement row.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementRow {
    pub sensor: usize,
    pub pos: [f64; 2],
    pub t: f64,
    pub value: f64,
}

/// Reads a measurement file written by `write_measurements` (or prepared
/// externally with the same header).
pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read measurements {}", path.display()))?;
    {
        let headers = reader.headers()?;
        let expected = ["sensor_id", "x", "y", "t", "value"];
        if headers.len() != 5 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            bail!(
                "measurements {} must have header `sensor_id,x,y,t,value`, found {:?}",
                path.display(),
                headers
            );
        }
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .map(str::trim)
                .ok_or_else(|| anyhow!("row {}: missing column {i}", line + 2))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|e| anyhow!("row {}: {e}", line + 2))
        };
        rows.push(MeasurementRow {
            sensor: field(0)?.parse().map_err(|e| anyhow!("row {}: {e}", line + 2))?,
            pos: [num(1)?, num(2)?],
            t: num(3)?,
            value: num(4)?,
        });
    }
    Ok(rows)
}

/// Checks that measurement rows line up one-to-one with the observation
/// operator's samples, and returns the data vector in operator order.
pub fn measurements_to_data(rows: &[MeasurementRow], samples: &[SampleInfo]) -> Result<Vec<f64>> {
    if rows.len() != samples.len() {
        bail!(
            "measurement file has {} rows, the configured sensors produce {} readings",
            rows.len(),
            samples.len()
        );
    }
    const TOL: f64 = 1e-9;
    for (i, (row, sample)) in rows.iter().zip(samples).enumerate() {
        if row.sensor != sample.sensor
            || (row.pos[0] - sample.pos[0]).abs() > TOL
            || (row.pos[1] - sample.pos[1]).abs() > TOL
            || (row.t - sample.t).abs() > TOL
        {
            bail!(
                "measurement row {} (sensor {} at ({}, {}), t = {}) does not match the \
                 configured reading (sensor {} at ({}, {}), t = {})",
                i + 2,
                row.sensor,
                row.pos[0],
                row.pos[1],
                row.t,
                sample.sensor,
                sample.pos[0],
                sample.pos[1],
                sample.t
            );
        }
    }
    Ok(rows.iter().map(|r| r.value).collect())
}

/// One named series of line-probe readings.
pub struct ReadingSeries<'a> {
    pub name: String,
    pub values: &'a [f64],
}

/// Writes line-probe readings: one row per (series, point).
pub fn write_readings(
    path: &Path,
    points: &[[f64; 2]],
    series: &[ReadingSeries],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["point_id", "x", "y", "series", "value"])?;
    for s in series {
        if s.values.len() != points.len() {
            bail!("series {} has {} values for {} points", s.name, s.values.len(), points.len());
        }
        for (i, (p, &v)) in points.iter().zip(s.values).enumerate() {
            writer.write_record([
                i.to_string(),
                fmt(p[0]),
                fmt(p[1]),
                s.name.clone(),
                fmt(v),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads one named series back from a readings file, ordered by point id.
pub fn read_reading_series(path: &Path, series: &str) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read readings {}", path.display()))?;
    {
        let headers = reader.headers()?;
        let expected = ["point_id", "x", "y", "series", "value"];
        if headers.len() != 5 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            bail!(
                "readings {} must have header `point_id,x,y,series,value`, found {:?}",
                path.display(),
                headers
            );
        }
    }
    let mut values: Vec<(usize, f64)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.get(3).map(str::trim) != Some(series) {
            continue;
        }
        let id: usize = record
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| anyhow!("row {}: {e}", line + 2))?;
        let value: f64 = record
            .get(4)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| anyhow!("row {}: {e}", line + 2))?;
        values.push((id, value));
    }
    if values.is_empty() {
        bail!("readings {} contain no rows for series {series:?}", path.display());
    }
    values.sort_by_key(|&(id, _)| id);
    for (i, &(id, _)) in values.iter().enumerate() {
        if id != i {
            bail!("series {series:?} point ids are not contiguous from 0");
        }
    }
    Ok(values.into_iter().map(|(_, v)| v).collect())
}

/// Writes the calibration score table: one row per candidate coefficient.
pub fn write_score_table(
    path: &Path,
    kappa: &[f64],
    series: &str,
    pi: &[f64],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["kappa", "series", "pi"])?;
    for (&k, &p) in kappa.iter().zip(pi) {
        writer.write_record([fmt(k), series.to_string(), fmt(p)])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use plumetrace_core::sensing::SampleInfo;

    fn samples() -> Vec<SampleInfo> {
        vec![
            SampleInfo { sensor: 0, pos: [0.25, 0.5], t: 0.1 },
            SampleInfo { sensor: 0, pos: [0.25, 0.5], t: 0.2 },
            SampleInfo { sensor: 1, pos: [0.75, 0.5], t: 0.1 },
        ]
    }

    #[test]
    fn floats_round_trip_through_shortest_form() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.30000000000000004] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn measurements_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let values = [1.5, -0.25, 1.0 / 3.0];
        write_measurements(&path, &samples(), &values).unwrap();
        let rows = read_measurements(&path).unwrap();
        let back = measurements_to_data(&rows, &samples()).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn shuffled_or_mismatched_measurements_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_measurements(&path, &samples(), &[1.0, 2.0, 3.0]).unwrap();
        let mut rows = read_measurements(&path).unwrap();
        rows.swap(0, 2);
        assert!(measurements_to_data(&rows, &samples()).is_err());
        rows.swap(0, 2);
        rows.pop();
        assert!(measurements_to_data(&rows, &samples()).is_err());
    }

    #[test]
    fn reading_series_filters_and_requires_contiguous_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let points = vec![[0.0, 0.5], [0.1, 0.5]];
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let series = vec![
            ReadingSeries { name: "reference".into(), values: &a },
            ReadingSeries { name: "kappa=0.001".into(), values: &b },
        ];
        write_readings(&path, &points, &series).unwrap();
        assert_eq!(read_reading_series(&path, "reference").unwrap(), a);
        assert_eq!(read_reading_series(&path, "kappa=0.001").unwrap(), b);
        assert!(read_reading_series(&path, "absent").is_err());

        let text = std::fs::read_to_string(&path).unwrap();
        let gapped: String =
            text.lines().filter(|l| !l.starts_with("0,")).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, gapped).unwrap();
        assert!(read_reading_series(&path, "reference").is_err());
    }
}
