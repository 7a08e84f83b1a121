//! CSV emitters. Column names and order are part of the public interface:
//!
//! - `areas.csv`: `z,theta_a,theta_b,theta_c,theta_d,theta_1,theta_2,theta_total,mag_a,mag_b,mag_c,mag_d`
//! - `peaks.csv`: `z,t_a,peak_a,t_b,peak_b,t_c,peak_c,t_d,peak_d`
//! - `fits.csv`: `z,channel,amplitude,width,center,rms_residual,regime` (fit columns empty when the fit fails)
//! - `fields_zNNN.csv`: `z,t,omega_a_re,omega_a_im,...,omega_d_re,omega_d_im`

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{classify_regime, fit_sech, snapshot_areas, AreaRecord, PeakSample};
use crate::error::Result;
use crate::grid::{Channel, FieldSnapshot, RetardedGrid};

pub const AREAS_HEADER: [&str; 12] = [
    "z", "theta_a", "theta_b", "theta_c", "theta_d", "theta_1", "theta_2", "theta_total", "mag_a",
    "mag_b", "mag_c", "mag_d",
];

#[derive(Serialize)]
struct AreaRow {
    z: f64,
    theta_a: f64,
    theta_b: f64,
    theta_c: f64,
    theta_d: f64,
    theta_1: f64,
    theta_2: f64,
    theta_total: f64,
    mag_a: f64,
    mag_b: f64,
    mag_c: f64,
    mag_d: f64,
}

impl From<&AreaRecord> for AreaRow {
    fn from(r: &AreaRecord) -> Self {
        let [theta_a, theta_b, theta_c, theta_d] = r.theta;
        let [mag_a, mag_b, mag_c, mag_d] = r.magnitude;
        AreaRow {
            z: r.z,
            theta_a,
            theta_b,
            theta_c,
            theta_d,
            theta_1: r.theta_1,
            theta_2: r.theta_2,
            theta_total: r.theta_total,
            mag_a,
            mag_b,
            mag_c,
            mag_d,
        }
    }
}

#[derive(Serialize)]
struct FitRow {
    z: f64,
    channel: Channel,
    amplitude: Option<f64>,
    width: Option<f64>,
    center: Option<f64>,
    rms_residual: Option<f64>,
    regime: &'static str,
}

pub fn write_areas<W: Write>(out: W, records: &[AreaRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(AreaRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record(AREAS_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per depth; tracks must all have the same length.
pub fn write_peaks<W: Write>(out: W, tracks: &[Vec<PeakSample>; 4]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z", "t_a", "peak_a", "t_b", "peak_b", "t_c", "peak_c", "t_d", "peak_d"])?;
    for k in 0..tracks[0].len() {
        let mut row = vec![tracks[0][k].z];
        for track in tracks {
            row.push(track[k].t);
            row.push(track[k].amplitude);
        }
        w.serialize(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fits<W: Write>(out: W, snapshots: &[FieldSnapshot], grid: &RetardedGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for snap in snapshots {
        let regime = classify_regime(&snapshot_areas(snap, grid)).label();
        for ch in Channel::ALL {
            let fit = fit_sech(snap.channel(ch), grid).ok();
            w.serialize(FitRow {
                z: snap.z,
                channel: ch,
                amplitude: fit.map(|f| f.amplitude),
                width: fit.map(|f| f.width),
                center: fit.map(|f| f.center),
                rms_residual: fit.map(|f| f.rms_residual),
                regime,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fields<W: Write>(out: W, snap: &FieldSnapshot, grid: &RetardedGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["z".to_string(), "t".to_string()];
    for ch in Channel::ALL {
        header.push(format!("omega_{ch}_re"));
        header.push(format!("omega_{ch}_im"));
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(10);
    for (i, t) in grid.times().enumerate() {
        row.clear();
        row.extend([snap.z, t]);
        for v in snap.at(i) {
            row.extend([v.re, v.im]);
        }
        w.serialize(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn fields_file_name(index: usize) -> String {
    format!("fields_z{index:03}.csv")
}

/// Write each snapshot to `dir/fields_zNNN.csv` and return the paths.
pub fn write_snapshots(dir: &Path, snapshots: &[FieldSnapshot], grid: &RetardedGrid) -> Result<Vec<PathBuf>> {
    snapshots
        .iter()
        .enumerate()
        .map(|(i, snap)| {
            let path = dir.join(fields_file_name(i));
            let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write_fields(file, snap, grid)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::total_areas;
    use crate::C64;

    fn text<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn areas_golden() {
        let r = total_areas(0.5, [3.0, 4.0, 0.0, 0.0], [3.0, 4.0, 0.25, 0.0]);
        let got = text(|b| write_areas(b, &[r]));
        assert_eq!(
            got,
            "z,theta_a,theta_b,theta_c,theta_d,theta_1,theta_2,theta_total,mag_a,mag_b,mag_c,mag_d\n\
             0.5,3.0,4.0,0.0,0.0,3.0,4.0,5.0,3.0,4.0,0.25,0.0\n"
        );
        let empty = text(|b| write_areas(b, &[]));
        assert_eq!(empty.trim_end(), AREAS_HEADER.join(","));
    }

    #[test]
    fn peaks_golden() {
        let s = |t: f64, a: f64| vec![PeakSample { z: 1.0, t, amplitude: a }];
        let tracks = [s(-1.0, 2.0), s(-1.5, 1.0), s(0.0, 0.0), s(0.25, 0.5)];
        let got = text(|b| write_peaks(b, &tracks));
        assert_eq!(got, "z,t_a,peak_a,t_b,peak_b,t_c,peak_c,t_d,peak_d\n1.0,-1.0,2.0,-1.5,1.0,0.0,0.0,0.25,0.5\n");
    }

    #[test]
    fn fields_golden() {
        let grid = RetardedGrid::time_only(-1.0, 1.0, 3).unwrap();
        let mut snap = FieldSnapshot::zeros(2.0, 3);
        snap.channel_mut(Channel::A)[1] = C64::new(1.5, -0.5);
        snap.channel_mut(Channel::D)[2] = C64::new(0.0, 2.0);
        let got = text(|b| write_fields(b, &snap, &grid));
        assert_eq!(
            got,
            "z,t,omega_a_re,omega_a_im,omega_b_re,omega_b_im,omega_c_re,omega_c_im,omega_d_re,omega_d_im\n\
             2.0,-1.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0\n\
             2.0,0.0,1.5,-0.5,0.0,0.0,0.0,0.0,0.0,0.0\n\
             2.0,1.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,2.0\n"
        );
    }

    #[test]
    fn fits_golden_for_empty_field() {
        let grid = RetardedGrid::time_only(-1.0, 1.0, 3).unwrap();
        let got = text(|b| write_fits(b, &[FieldSnapshot::zeros(0.0, 3)], &grid));
        assert_eq!(
            got,
            "z,channel,amplitude,width,center,rms_residual,regime\n\
             0.0,a,,,,,I\n0.0,b,,,,,I\n0.0,c,,,,,I\n0.0,d,,,,,I\n"
        );
    }

    #[test]
    fn file_names() {
        assert_eq!(fields_file_name(0), "fields_z000.csv");
        assert_eq!(fields_file_name(12), "fields_z012.csv");
    }
}
