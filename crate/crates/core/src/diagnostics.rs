//! Post-processing of field snapshots: pulse areas and their quadrature
//! totals, sech fitting, peak tracking and regime classification.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Channel, FieldSnapshot, RetardedGrid};
use crate::solver::PropagationResult;

/// sech FWHM in units of the width parameter, `2 acosh(2)`.
const SECH_FWHM: f64 = 2.633_915_793_849_634;

/// Fraction of the medium used at each end for drift-rate fits.
pub const TRACK_WINDOW: f64 = 0.2;
/// Samples below this fraction of the global maximum are not tracked.
pub const TRACK_FLOOR: f64 = 0.01;
pub const MIN_TRACK_SAMPLES: usize = 10;

pub fn trapezoid<I, T>(samples: I, dt: f64) -> T
where
    I: IntoIterator<Item = T>,
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let mut it = samples.into_iter();
    let Some(first) = it.next() else {
        return T::default();
    };
    let mut sum = first * 0.5;
    let mut last = first;
    let mut n = 1;
    for x in it {
        sum = sum + x;
        last = x;
        n += 1;
    }
    if n == 1 {
        return T::default();
    }
    // the last sample was added with weight 1, correct it to 1/2
    (sum + last * -0.5) * dt
}

/// Complex integral of the envelope over the grid.
pub fn coherent_area(envelope: &[C64], grid: &RetardedGrid) -> C64 {
    trapezoid(envelope.iter().copied(), grid.dt())
}

/// Pulse area `|integral Omega dT|`.
pub fn pulse_area(envelope: &[C64], grid: &RetardedGrid) -> f64 {
    coherent_area(envelope, grid).norm()
}

/// `integral |Omega| dT`.
pub fn magnitude_area(envelope: &[C64], grid: &RetardedGrid) -> f64 {
    trapezoid(envelope.iter().map(|w| w.norm()), grid.dt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AreaRecord {
    pub z: f64,
    /// Coherent areas of channels a, b, c, d.
    pub theta: [f64; 4],
    pub theta_1: f64,
    pub theta_2: f64,
    pub theta_total: f64,
    /// Magnitude areas of channels a, b, c, d.
    pub magnitude: [f64; 4],
}

impl AreaRecord {
    pub fn theta(&self, ch: Channel) -> f64 {
        self.theta[ch.index()]
    }
}

/// Fill the quadrature totals: theta_1 from (a, c), theta_2 from (b, d).
pub fn total_areas(z: f64, theta: [f64; 4], magnitude: [f64; 4]) -> AreaRecord {
    let [a, b, c, d] = theta;
    let theta_1 = a.hypot(c);
    let theta_2 = b.hypot(d);
    AreaRecord { z, theta, theta_1, theta_2, theta_total: theta_1.hypot(theta_2), magnitude }
}

pub fn snapshot_areas(snapshot: &FieldSnapshot, grid: &RetardedGrid) -> AreaRecord {
    let theta = Channel::ALL.map(|ch| pulse_area(snapshot.channel(ch), grid));
    let magnitude = Channel::ALL.map(|ch| magnitude_area(snapshot.channel(ch), grid));
    total_areas(snapshot.z, theta, magnitude)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeakSample {
    pub z: f64,
    pub t: f64,
    pub amplitude: f64,
}

/// Peak of |envelope| refined by a parabola through the discrete maximum
/// and its neighbours. Returns (time, amplitude).
pub fn peak_position(envelope: &[C64], grid: &RetardedGrid) -> (f64, f64) {
    let mags: Vec<f64> = envelope.iter().map(|w| w.norm()).collect();
    refine_peak(&mags, grid.t_min, grid.dt())
}

fn refine_peak(y: &[f64], x0: f64, dx: f64) -> (f64, f64) {
    let Some((i, &y0)) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else {
        return (x0, 0.0);
    };
    if i == 0 || i + 1 == y.len() {
        return (x0 + i as f64 * dx, y0);
    }
    let (ym, yp) = (y[i - 1], y[i + 1]);
    let curvature = ym - 2.0 * y0 + yp;
    if curvature >= 0.0 {
        return (x0 + i as f64 * dx, y0);
    }
    let offset = 0.5 * (ym - yp) / curvature;
    (x0 + (i as f64 + offset) * dx, y0 - 0.25 * (ym - yp) * offset)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SechFit {
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    /// RMS of (model - data) over the fitted region, relative to the amplitude.
    pub rms_residual: f64,
}

impl SechFit {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.amplitude * self.width
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude / ((t - self.center) / self.width).cosh()
    }
}

/// Least-squares fit of `A sech((T - T0) / w)` to |envelope|.
pub fn fit_sech(envelope: &[C64], grid: &RetardedGrid) -> Result<SechFit> {
    let xs: Vec<f64> = grid.times().collect();
    let ys: Vec<f64> = envelope.iter().map(|w| w.norm()).collect();
    fit_sech_points(&xs, &ys)
}

/// As [`fit_sech`] for real samples on an arbitrary increasing abscissa.
pub fn fit_sech_points(xs: &[f64], ys: &[f64]) -> Result<SechFit> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return Err(Error::Fit("need at least four samples".into()));
    }
    let (imax, &peak) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Fit("envelope has no positive peak".into()));
    }
    let second = secondary_maximum(ys, imax, peak);
    if second * 5.0 > peak {
        return Err(Error::Fit(format!(
            "multiple peaks: secondary maximum {second:.3e} vs peak {peak:.3e}"
        )));
    }

    let region: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] > 0.01 * peak).collect();
    let (x0, y0) = if imax > 0 && imax + 1 < xs.len() {
        let dx = xs[imax + 1] - xs[imax];
        refine_peak(&ys[imax - 1..=imax + 1], xs[imax - 1], dx)
    } else {
        (xs[imax], peak)
    };
    let fwhm = half_max_width(xs, ys, imax, peak);
    let mut p = Vector3::new(y0, x0, (fwhm / SECH_FWHM).max(1e-12));

    let residuals = |p: &Vector3<f64>| -> Vec<f64> {
        region
            .iter()
            .map(|&i| p[0] / ((xs[i] - p[1]) / p[2]).cosh() - ys[i])
            .collect()
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (k, &i) in region.iter().enumerate() {
            let x = (xs[i] - p[1]) / p[2];
            let s = 1.0 / x.cosh();
            let th = x.tanh();
            let j = Vector3::new(s, p[0] * s * th / p[2], p[0] * s * th * x / p[2]);
            jtj += j * j.transpose();
            jtr += j * r[k];
        }
        if jtr.norm() <= 1e-30 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for d in 0..3 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            if !(trial[2] > 0.0) || !trial.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct <= c {
                let small_step = step.iter().zip(p.iter()).all(|(s, v)| s.abs() <= 1e-13 * v.abs().max(1e-12));
                let flat = c - ct <= 1e-16 * c;
                p = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small_step || flat {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !improved {
            // no descent direction left at any damping: we are at the minimum
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit("Levenberg-Marquardt did not converge".into()));
    }
    let amplitude = p[0];
    let rms_residual = (c / region.len() as f64).sqrt() / amplitude.abs();
    Ok(SechFit { amplitude, width: p[2], center: p[1], rms_residual })
}

/// Largest value outside the main lobe, where the lobe is followed outward
/// from the peak for as long as the samples keep falling (to within 0.1%
/// of the peak, so small ripples on a shoulder do not end it).
fn secondary_maximum(ys: &[f64], imax: usize, peak: f64) -> f64 {
    let slack = 1e-3 * peak;
    let mut lo = imax;
    while lo > 0 && ys[lo - 1] <= ys[lo] + slack {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < ys.len() && ys[hi + 1] <= ys[hi] + slack {
        hi += 1;
    }
    ys[..lo].iter().chain(&ys[hi + 1..]).copied().fold(0.0, f64::max)
}

fn half_max_width(xs: &[f64], ys: &[f64], imax: usize, peak: f64) -> f64 {
    let half = 0.5 * peak;
    let cross = |i: usize, j: usize| {
        // linear crossing between samples i and j
        let f = (half - ys[i]) / (ys[j] - ys[i]);
        xs[i] + f * (xs[j] - xs[i])
    };
    let left = (1..=imax).rev().find(|&i| ys[i - 1] < half).map(|i| cross(i - 1, i)).unwrap_or(xs[0]);
    let right = (imax..ys.len() - 1)
        .find(|&i| ys[i + 1] < half)
        .map(|i| cross(i, i + 1))
        .unwrap_or(xs[xs.len() - 1]);
    (right - left).max(xs[1] - xs[0])
}

/// Least-squares slope dT/dZ of a peak track inside `[z_lo, z_hi]`, using
/// samples with amplitude at or above `floor`.
pub fn drift_rate(track: &[PeakSample], z_lo: f64, z_hi: f64, floor: f64) -> Result<f64> {
    let pts: Vec<&PeakSample> = track
        .iter()
        .filter(|s| s.z >= z_lo && s.z <= z_hi && s.amplitude >= floor)
        .collect();
    if pts.len() < MIN_TRACK_SAMPLES {
        return Err(Error::Tracking(format!(
            "{} trackable samples in [{z_lo}, {z_hi}], need {MIN_TRACK_SAMPLES}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mz = pts.iter().map(|s| s.z).sum::<f64>() / n;
    let mt = pts.iter().map(|s| s.t).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|s| (s.z - mz) * (s.t - mt)).sum();
    let sxx: f64 = pts.iter().map(|s| (s.z - mz).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Tracking("degenerate depth window".into()));
    }
    Ok(sxy / sxx)
}

/// Per-channel drift rates: input channels (a, b) over the first fifth of the
/// medium, output channels (c, d) over the last fifth.
pub fn track_peaks(result: &PropagationResult) -> [Result<f64>; 4] {
    let z_end = result.area_records.last().map(|r| r.z).unwrap_or(0.0);
    let global = result
        .peak_tracks
        .iter()
        .flatten()
        .map(|s| s.amplitude)
        .fold(0.0, f64::max);
    let floor = TRACK_FLOOR * global;
    Channel::ALL.map(|ch| {
        let (lo, hi) = if ch.is_input() {
            (0.0, TRACK_WINDOW * z_end)
        } else {
            ((1.0 - TRACK_WINDOW) * z_end, z_end)
        };
        if global == 0.0 {
            return Err(Error::Tracking("all fields vanish".into()));
        }
        drift_rate(&result.peak_tracks[ch.index()], lo, hi, floor)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Input,
    Transfer,
    Output,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Input => "I",
            Regime::Transfer => "II",
            Regime::Output => "III",
        }
    }
}

/// Classify by the share of squared total area carried by the output pair.
pub fn classify_regime(record: &AreaRecord) -> Regime {
    let total = record.theta_total * record.theta_total;
    if total == 0.0 {
        return Regime::Input;
    }
    let out = (record.theta[2].powi(2) + record.theta[3].powi(2)) / total;
    if out < 0.05 {
        Regime::Input
    } else if out > 0.95 {
        Regime::Output
    } else {
        Regime::Transfer
    }
}

/// Spatial width in the lab frame of a pulse with temporal width `width`
/// whose retarded-frame peak drifts at `drift = dT/dZ` (c = 1).
pub fn lab_width(width: f64, drift: f64) -> f64 {
    width / (1.0 + drift)
}

/// |Omega| along the lab coordinate at fixed lab time `t_lab`, assembled
/// from snapshots: each snapshot contributes its sample at `T = t_lab - z`.
pub fn lab_profile(
    snapshots: &[FieldSnapshot],
    ch: Channel,
    grid: &RetardedGrid,
    t_lab: f64,
) -> Vec<(f64, f64)> {
    snapshots
        .iter()
        .map(|s| {
            let t = t_lab - s.z;
            let u = (t - grid.t_min) / grid.dt();
            let env = s.channel(ch);
            let v = if u < 0.0 || u > (env.len() - 1) as f64 {
                0.0
            } else {
                let i = (u.floor() as usize).min(env.len() - 2);
                let f = u - i as f64;
                (1.0 - f) * env[i].norm() + f * env[i + 1].norm()
            };
            (s.z, v)
        })
        .collect()
}
