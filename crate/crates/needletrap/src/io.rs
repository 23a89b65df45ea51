//! CSV and raw-stream readers/writers for the toolkit's file formats.
//!
//! All CSVs carry a header row. Distances and frequencies use display units
//! in files (`d_um`, `f_khz`) and SI everywhere in memory; the conversion
//! factors live in [`crate::constants`]. Floats are written with Rust's
//! shortest round-trip formatting, so identical data produces identical
//! bytes.

use crate::analysis::Spectrum;
use crate::constants::{khz_to_angular, um_to_m};
use crate::dynamics::Trajectory;
use crate::fitting::{ScanPoint, ScanRow};
use crate::floquet::StabilityMapPoint;
use crate::libration::{ChargePoint, MassPoint};
use crate::trap::Efficiency;
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

fn csv_error(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::CsvParse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Reader with per-record line tracking and required headers.
struct CsvTable {
    headers: Vec<String>,
    records: Vec<(u64, Vec<f64>)>,
}

fn read_table(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(record.len());
        for (i, field) in record.iter().enumerate() {
            if field.is_empty() {
                row.push(f64::NAN); // optional column left blank
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                csv_error(
                    path,
                    line,
                    format!("column '{}': cannot parse '{}'", headers[i], field),
                )
            })?;
            row.push(v);
        }
        records.push((line, row));
    }
    Ok(CsvTable { headers, records })
}

impl CsvTable {
    fn column(&self, path: &Path, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| csv_error(path, 1, format!("missing column '{name}'")))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }
}

/// Read an efficiency table CSV with columns `d_um, eta[, eta_dc]`.
pub fn read_eta_table(path: &Path) -> Result<(Efficiency, Option<Efficiency>)> {
    let table = read_table(path)?;
    let c_d = table.column(path, "d_um")?;
    let c_eta = table.column(path, "eta")?;
    let c_dc = table.optional_column("eta_dc");
    let mut ds = Vec::with_capacity(table.records.len());
    let mut etas = Vec::with_capacity(table.records.len());
    let mut dcs = Vec::with_capacity(table.records.len());
    for (line, row) in &table.records {
        ds.push(um_to_m(row[c_d]));
        etas.push(row[c_eta]);
        if let Some(c) = c_dc {
            if row[c].is_nan() {
                return Err(csv_error(path, *line, "blank eta_dc entry"));
            }
            dcs.push(row[c]);
        }
    }
    let eta = Efficiency::from_table(ds.clone(), etas)
        .map_err(|e| csv_error(path, 0, e.to_string()))?;
    let eta_dc = if c_dc.is_some() {
        Some(Efficiency::from_table(ds, dcs).map_err(|e| csv_error(path, 0, e.to_string()))?)
    } else {
        None
    };
    Ok((eta, eta_dc))
}

/// Read a frequency scan CSV with columns `d_um, f_khz[, sigma_f_khz]`.
/// Frequencies are secular frequencies f = ω/2π.
pub fn read_frequency_scan(path: &Path) -> Result<Vec<ScanPoint>> {
    let table = read_table(path)?;
    let c_d = table.column(path, "d_um")?;
    let c_f = table.column(path, "f_khz")?;
    let c_s = table.optional_column("sigma_f_khz");
    table
        .records
        .iter()
        .map(|(line, row)| {
            let sigma = match c_s {
                Some(c) if !row[c].is_nan() => Some(khz_to_angular(row[c])),
                _ => None,
            };
            if !row[c_d].is_finite() || !row[c_f].is_finite() {
                return Err(csv_error(path, *line, "non-finite value"));
            }
            Ok(ScanPoint {
                d: um_to_m(row[c_d]),
                omega: khz_to_angular(row[c_f]),
                sigma_omega: sigma,
            })
        })
        .collect()
}

/// Read a time series CSV with a `t_s` column; returns the selected signal
/// column (by header name, or the first non-time column) and the sample rate
/// inferred from the (validated, uniform) time grid.
pub fn read_time_series(path: &Path, column: Option<&str>) -> Result<(Vec<f64>, f64)> {
    let table = read_table(path)?;
    let c_t = table.column(path, "t_s")?;
    let c_x = match column {
        Some(name) => table.column(path, name)?,
        None if table.headers.len() > 1 => {
            if c_t == 0 {
                1
            } else {
                0
            }
        }
        None => return Err(csv_error(path, 1, "need a signal column next to t_s")),
    };
    if table.records.len() < 3 {
        return Err(Error::SeriesTooShort("need at least 3 samples".into()));
    }
    let times: Vec<f64> = table.records.iter().map(|(_, r)| r[c_t]).collect();
    let signal: Vec<f64> = table.records.iter().map(|(_, r)| r[c_x]).collect();
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(csv_error(path, 2, "time grid must be increasing"));
    }
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if (step - dt).abs() > 1e-6 * dt {
            return Err(csv_error(
                path,
                table.records[i + 1].0,
                format!("non-uniform time step {step} (expected {dt})"),
            ));
        }
    }
    Ok((signal, 1.0 / dt))
}

/// Read a raw little-endian f64 stream.
pub fn read_f64_stream(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid(
            "stream",
            format!("length {} is not a multiple of 8 bytes", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Read a charge distribution CSV with columns `charge_c, x_m, y_m, z_m`.
pub fn read_charge_points(path: &Path) -> Result<Vec<ChargePoint>> {
    let table = read_table(path)?;
    let c_q = table.column(path, "charge_c")?;
    let (cx, cy, cz) = (
        table.column(path, "x_m")?,
        table.column(path, "y_m")?,
        table.column(path, "z_m")?,
    );
    table
        .records
        .iter()
        .map(|(line, row)| {
            if row.iter().any(|v| v.is_nan()) {
                return Err(csv_error(path, *line, "blank or non-finite field"));
            }
            Ok(ChargePoint {
                charge: row[c_q],
                position: [row[cx], row[cy], row[cz]],
            })
        })
        .collect()
}

/// Read a mass distribution CSV with columns `mass_kg, x_m, y_m, z_m`.
pub fn read_mass_points(path: &Path) -> Result<Vec<MassPoint>> {
    let table = read_table(path)?;
    let c_m = table.column(path, "mass_kg")?;
    let (cx, cy, cz) = (
        table.column(path, "x_m")?,
        table.column(path, "y_m")?,
        table.column(path, "z_m")?,
    );
    table
        .records
        .iter()
        .map(|(line, row)| {
            if row.iter().any(|v| v.is_nan()) {
                return Err(csv_error(path, *line, "blank or non-finite field"));
            }
            Ok(MassPoint {
                mass: row[c_m],
                position: [row[cx], row[cy], row[cz]],
            })
        })
        .collect()
}

/// Write a trajectory CSV: `t_s` then `x_m, vx_m_s` per integrated axis.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::from("t_s");
    for s in &traj.series {
        header.push_str(&format!(",{0}_m,v{0}_m_s", s.axis));
    }
    writeln!(w, "{header}")?;
    for i in 0..traj.sample_count() {
        write!(w, "{}", i as f64 * traj.dt)?;
        for s in &traj.series {
            write!(w, ",{},{}", s.position[i], s.velocity[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write a spectrum CSV with columns `f_Hz, psd`.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "f_Hz,psd")?;
    for (f, p) in spectrum.frequencies.iter().zip(&spectrum.psd) {
        writeln!(w, "{f},{p}")?;
    }
    Ok(())
}

/// Write a stability map CSV with columns `a, q, stable, beta`.
pub fn write_stability_map(path: &Path, map: &[StabilityMapPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "a,q,stable,beta")?;
    for p in map {
        match p.beta {
            Some(beta) => writeln!(w, "{},{},1,{}", p.a, p.q, beta)?,
            None => writeln!(w, "{},{},0,", p.a, p.q)?,
        }
    }
    Ok(())
}

/// Write a stability boundary CSV with columns `a, q_boundary`.
pub fn write_boundary(path: &Path, boundary: &[(f64, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "a,q_boundary")?;
    for (a, q) in boundary {
        writeln!(w, "{a},{q}")?;
    }
    Ok(())
}

/// Write a frequency-vs-distance curve CSV with columns
/// `d_um, q_z, a_z, f_khz, stable`.
pub fn write_scan_rows(path: &Path, rows: &[ScanRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "d_um,q_z,a_z,f_khz,stable")?;
    for r in rows {
        let f = r
            .omega_z
            .map_or(String::new(), |w| format!("{}", crate::constants::angular_to_khz(w)));
        writeln!(
            w,
            "{},{},{},{},{}",
            crate::constants::m_to_um(r.d),
            r.q_z,
            r.a_z,
            f,
            if r.stable { 1 } else { 0 }
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn write(path: &Path, contents: &str) {
        std::fs::write(path, contents).unwrap();
    }

    #[test]
    fn eta_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eta.csv");
        write(&p, "d_um,eta,eta_dc\n50,0.25,0.25\n100,0.27,0.20\n800,0.33,0.05\n");
        let (eta, eta_dc) = read_eta_table(&p).unwrap();
        assert_relative_eq!(eta.eval(50e-6).unwrap(), 0.25, max_relative = 1e-12);
        assert_relative_eq!(
            eta_dc.unwrap().eval(800e-6).unwrap(),
            0.05,
            max_relative = 1e-12
        );
    }

    #[test]
    fn eta_table_without_dc_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eta.csv");
        write(&p, "d_um,eta\n50,0.25\n800,0.33\n");
        let (_, eta_dc) = read_eta_table(&p).unwrap();
        assert!(eta_dc.is_none());
    }

    #[test]
    fn parse_error_carries_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eta.csv");
        write(&p, "d_um,eta\n50,0.25\n100,oops\n");
        match read_eta_table(&p).unwrap_err() {
            Error::CsvParse { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("eta"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn scan_csv_units() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.csv");
        write(&p, "d_um,f_khz,sigma_f_khz\n50,30.2,0.3\n100,8.1,\n");
        let points = read_frequency_scan(&p).unwrap();
        assert_eq!(points.len(), 2);
        assert_relative_eq!(points[0].d, 50e-6, max_relative = 1e-12);
        assert_relative_eq!(points[0].omega, 2.0 * PI * 30.2e3, max_relative = 1e-12);
        assert_relative_eq!(
            points[0].sigma_omega.unwrap(),
            2.0 * PI * 0.3e3,
            max_relative = 1e-12
        );
        assert!(points[1].sigma_omega.is_none());
    }

    #[test]
    fn time_series_uniformity_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        write(&p, "t_s,signal\n0,1\n0.001,2\n0.002,3\n0.004,4\n");
        assert!(matches!(
            read_time_series(&p, None),
            Err(Error::CsvParse { .. })
        ));
        let p2 = dir.path().join("ok.csv");
        write(&p2, "t_s,z_m,vz_m_s\n0,1,9\n0.001,2,9\n0.002,3,9\n");
        let (signal, fs) = read_time_series(&p2, None).unwrap();
        assert_eq!(signal, vec![1.0, 2.0, 3.0]);
        assert_relative_eq!(fs, 1000.0, max_relative = 1e-9);
        let (vel, _) = read_time_series(&p2, Some("vz_m_s")).unwrap();
        assert_eq!(vel, vec![9.0, 9.0, 9.0]);
        assert!(read_time_series(&p2, Some("missing")).is_err());
    }

    #[test]
    fn f64_stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sig.f64");
        let data = [1.5_f64, -2.25, 1e-19, 0.0];
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&p, bytes).unwrap();
        assert_eq!(read_f64_stream(&p).unwrap(), data);
        std::fs::write(&p, [1u8, 2, 3]).unwrap();
        assert!(read_f64_stream(&p).is_err());
    }

    #[test]
    fn distribution_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("charges.csv");
        write(
            &p,
            "charge_c,x_m,y_m,z_m\n4.0e-19,0,0,5e-8\n4.0e-19,0,0,-5e-8\n",
        );
        let pts = read_charge_points(&p).unwrap();
        assert_eq!(pts.len(), 2);
        assert_relative_eq!(pts[0].position[2], 5e-8, max_relative = 1e-12);

        let m = dir.path().join("masses.csv");
        write(&m, "mass_kg,x_m,y_m,z_m\n1e-19,0,0,4e-8\n1e-19,0,0,-4e-8\n");
        assert_eq!(read_mass_points(&m).unwrap().len(), 2);
    }
}
