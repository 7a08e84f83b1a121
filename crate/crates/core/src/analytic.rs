//! Closed-form four-pulse soliton solution: fundamental Rabi frequency,
//! mixing angle, the four envelopes, their areas and group velocities.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bloch::detuning_rule;
use crate::diagnostics::{self, total_areas, AreaRecord, PeakSample};
use crate::error::{Error, Result};
use crate::grid::{Channel, FieldSnapshot, RetardedGrid};
use crate::medium::{check_populations, LineShape};
use crate::solver::PropagationResult;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub tau: f64,
    /// Mixing constant in [0, pi/2].
    pub u: f64,
    pub alpha_sq: f64,
    pub beta_sq: f64,
    pub kappa: f64,
}

impl SolitonParams {
    pub fn new(tau: f64, u: f64, alpha_sq: f64, kappa: f64) -> Result<Self> {
        let p = Self { tau, u, alpha_sq, beta_sq: 1.0 - alpha_sq, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::domain(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::domain(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(0.0..=FRAC_PI_2).contains(&self.u) {
            return Err(Error::domain(format!("u must lie in [0, pi/2], got {}", self.u)));
        }
        check_populations(self.alpha_sq, self.beta_sq)
    }

    /// Retarded time of the fundamental pulse peak at depth `z`.
    ///
    /// Exact: the maximum of the denominator's `2 cosh(s) + e^(q+s)` form sits at
    /// `s = -ln(1 + e^q) / 2` with `q = 2(alpha^2 - beta^2) kappa z`.
    pub fn peak_time(&self, z: f64) -> f64 {
        let q = 2.0 * (self.alpha_sq - self.beta_sq) * self.kappa * z;
        self.tau * (self.alpha_sq * self.kappa * z - 0.5 * softplus(q))
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// `(mu / 2 tau) < 1 / (Delta^2 + 1/tau^2) >` over the detuning distribution.
pub fn kappa_average(mu: f64, tau: f64, line: LineShape, n_nodes: usize) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::domain(format!("mu must be > 0, got {mu}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::domain(format!("tau must be > 0, got {tau}")));
    }
    let (nodes, weights) = detuning_rule(line, n_nodes)?;
    let inv_tau_sq = 1.0 / (tau * tau);
    let mean: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(d, w)| w / (d * d + inv_tau_sq))
        .sum();
    Ok(mu / (2.0 * tau) * mean)
}

/// Mixing angle, `tan phi = exp((beta^2 - alpha^2) kappa z)`.
pub fn phi(z: f64, p: &SolitonParams) -> f64 {
    let x = (p.beta_sq - p.alpha_sq) * p.kappa * z;
    // atan(e^x) = pi/2 - atan(e^-x); pick the branch that cannot overflow
    if x <= 0.0 {
        x.exp().atan()
    } else {
        FRAC_PI_2 - (-x).exp().atan()
    }
}

/// Fundamental Rabi frequency of the four-pulse solution.
pub fn fundamental_rabi(z: f64, t: f64, p: &SolitonParams) -> f64 {
    fundamental_rabi_split(z, t, p, p.kappa)
}

/// As [`fundamental_rabi`] with a separate kappa inside the numerator's
/// square root. Only used to inject inconsistent-kappa faults.
pub(crate) fn fundamental_rabi_split(z: f64, t: f64, p: &SolitonParams, numerator_kappa: f64) -> f64 {
    let (a2, b2, s) = (p.alpha_sq, p.beta_sq, t / p.tau);
    let kz = p.kappa * z;
    let log_num = (4.0 / p.tau).ln() + 0.5 * softplus(2.0 * (a2 - b2) * numerator_kappa * z);
    let x = a2 * kz - s;
    let log_den = log_sum_exp3(x, -x, (a2 - 2.0 * b2) * kz + s);
    (log_num - log_den).exp()
}

pub fn analytic_fields(z: f64, grid: &RetardedGrid, p: &SolitonParams) -> FieldSnapshot {
    analytic_fields_split(z, grid, p, p.kappa)
}

pub(crate) fn analytic_fields_split(
    z: f64,
    grid: &RetardedGrid,
    p: &SolitonParams,
    numerator_kappa: f64,
) -> FieldSnapshot {
    let ph = phi(z, p);
    let (su, cu) = p.u.sin_cos();
    let (sp, cp) = ph.sin_cos();
    let factors = [su * sp, cu * sp, su * cp, cu * cp];
    let fundamental: Vec<f64> =
        grid.times().map(|t| fundamental_rabi_split(z, t, p, numerator_kappa)).collect();
    let omega = factors.map(|f| fundamental.iter().map(|w| C64::new(f * w, 0.0)).collect());
    FieldSnapshot { z, omega }
}

/// Closed-form areas at depth `z`.
pub fn analytic_areas(z: f64, p: &SolitonParams) -> AreaRecord {
    let ph = phi(z, p);
    let (su, cu) = p.u.sin_cos();
    let (sp, cp) = ph.sin_cos();
    let two_pi = 2.0 * PI;
    let theta = [two_pi * su * sp, two_pi * cu * sp, two_pi * su * cp, two_pi * cu * cp];
    total_areas(z, theta, theta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupVelocities {
    /// Input pair (a, b) group velocity as a fraction of c.
    pub v_in: f64,
    /// Output pair (c, d) group velocity as a fraction of c.
    pub v_out: f64,
    /// Retarded-frame peak drift dT/dZ of the input pair.
    pub drift_in: f64,
    pub drift_out: f64,
}

pub fn group_velocities(p: &SolitonParams) -> GroupVelocities {
    let kt = p.kappa * p.tau;
    let drift_in = p.alpha_sq * kt;
    let drift_out = p.beta_sq * kt;
    GroupVelocities { v_in: 1.0 / (1.0 + drift_in), v_out: 1.0 / (1.0 + drift_out), drift_in, drift_out }
}

/// Closed-form evolution sampled like a solver run: the medium entrance
/// `z = 0` corresponds to the solution's depth `z_entry`. Snapshots are
/// kept every `snapshot_stride` steps (and at the last step).
pub fn analytic_propagation(
    grid: &RetardedGrid,
    p: &SolitonParams,
    z_entry: f64,
    snapshot_stride: usize,
) -> Result<PropagationResult> {
    grid.validate()?;
    p.validate()?;
    let stride = snapshot_stride.max(1);
    let mut result = PropagationResult::default();
    for k in 0..=grid.n_z {
        let z = grid.depth(k);
        let snap = analytic_fields(z + z_entry, grid, p);
        let theta = analytic_areas(z + z_entry, p).theta;
        let mut record = total_areas(z, theta, theta);
        record.z = z;
        result.area_records.push(record);
        for ch in Channel::ALL {
            let (t, amplitude) = diagnostics::peak_position(snap.channel(ch), grid);
            result.peak_tracks[ch.index()].push(PeakSample { z, t, amplitude });
        }
        result.energies.push(snap.energy(grid.dt()));
        if k % stride == 0 || k == grid.n_z {
            result.snapshots.push(FieldSnapshot { z, ..snap });
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::pulse_area;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn params(u: f64, alpha_sq: f64) -> SolitonParams {
        SolitonParams::new(1.0, u, alpha_sq, 0.5).unwrap()
    }

    /// Direct transcription of the closed form, valid for moderate arguments.
    fn naive_rabi(z: f64, t: f64, p: &SolitonParams) -> f64 {
        let (a2, b2, k) = (p.alpha_sq, p.beta_sq, p.kappa);
        let num = (4.0 / p.tau) * (1.0 + (2.0 * (a2 - b2) * k * z).exp()).sqrt();
        let den = 2.0 * (a2 * k * z - t / p.tau).cosh() + ((a2 - 2.0 * b2) * k * z + t / p.tau).exp();
        num / den
    }

    #[test]
    fn kappa_sharp_line() {
        for (mu, tau) in [(1.0, 1.0), (2.5, 0.3), (0.1, 7.0)] {
            let k = kappa_average(mu, tau, LineShape::SharpLine, 1).unwrap();
            assert!((k - mu * tau / 2.0).abs() < 1e-15 * mu * tau);
        }
        let k = kappa_average(1.0, 1.0, LineShape::Gaussian { t2_star: 1e6 }, 64).unwrap();
        assert!((k / 0.5 - 1.0).abs() < 1e-6);
        assert!(kappa_average(0.0, 1.0, LineShape::SharpLine, 1).is_err());
        assert!(kappa_average(1.0, -1.0, LineShape::SharpLine, 1).is_err());
    }

    #[test]
    fn phi_examples() {
        let p = params(FRAC_PI_4, 0.75);
        assert!((phi(0.0, &p) - FRAC_PI_4).abs() < 1e-15);
        // kappa z = 1
        let expected = (-0.5f64).exp().atan();
        assert!((phi(2.0, &p) - expected).abs() < 1e-15);
        assert!((phi(2.0, &p) - 0.545_207_623_830_583_6).abs() < 1e-15);

        let pure = params(FRAC_PI_4, 1.0);
        assert!(phi(1e6, &pure) < 1e-300);
        assert!((phi(-1e6, &pure) - FRAC_PI_2).abs() < 1e-15);
        assert!(phi(1e308, &pure).is_finite());
    }

    #[test]
    fn rabi_at_origin() {
        for tau in [1.0, 0.5, 3.0] {
            let p = SolitonParams::new(tau, 0.3, 0.75, 0.5).unwrap();
            let expected = (4.0 / tau) * 2f64.sqrt() / 3.0;
            assert!((fundamental_rabi(0.0, 0.0, &p) - expected).abs() < 1e-14);
            assert!((fundamental_rabi(0.0, 0.0, &p) * tau - 1.885_618).abs() < 1e-6);
        }
    }

    #[test]
    fn stable_form_matches_naive_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = SolitonParams::new(
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..FRAC_PI_2),
                rng.random_range(0.5..1.0),
                rng.random_range(0.1..2.0),
            )
            .unwrap();
            let z = rng.random_range(-20.0..20.0) / p.kappa;
            let t = rng.random_range(-20.0..20.0) * p.tau;
            let (a, b) = (fundamental_rabi(z, t, &p), naive_rabi(z, t, &p));
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn overflow_safety() {
        let p = params(FRAC_PI_4, 0.75);
        for kz in [-600.0, 600.0] {
            for s in [-600.0, 600.0, 0.0] {
                let w = fundamental_rabi(kz / p.kappa, s * p.tau, &p);
                assert!(w.is_finite() && w >= 0.0);
            }
        }
        // on the moving peak the amplitude stays at 2/tau even far out
        let w = fundamental_rabi(-600.0 / p.kappa, p.peak_time(-600.0 / p.kappa), &p);
        assert!((w - 2.0).abs() < 1e-12);
    }

    #[test]
    fn regime_one_sech_limit() {
        let p = params(FRAC_PI_4, 0.75);
        let z = -40.0 / p.kappa;
        for s in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let t = (p.alpha_sq * p.kappa * z + s) * p.tau;
            let expected = 2.0 / p.tau / s.cosh();
            assert!((fundamental_rabi(z, t, &p) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn simulton_peak_constant() {
        let p = params(FRAC_PI_4, 0.5);
        let peaks: Vec<f64> = [-10.0, -3.0, 0.0, 4.0, 12.0]
            .iter()
            .map(|kz| {
                let z = kz / p.kappa;
                let t = p.peak_time(z);
                let w = fundamental_rabi(z, t, &p);
                let symbolic = (4.0 / p.tau) * 2f64.sqrt()
                    / (2.0 * (kz / 2.0 - t / p.tau).cosh() + (-kz / 2.0 + t / p.tau).exp());
                assert!((w - symbolic).abs() < 1e-13);
                w
            })
            .collect();
        for w in &peaks {
            assert!((w - peaks[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_examples() {
        let g = RetardedGrid::time_only(-20.0, 20.0, 201).unwrap();
        let s = analytic_fields(0.3, &g, &params(FRAC_PI_2, 0.75));
        assert!(s.channel(Channel::B).iter().chain(s.channel(Channel::D)).all(|w| w.norm() < 1e-15));
        let s = analytic_fields(0.3, &g, &params(0.0, 0.75));
        assert!(s.channel(Channel::A).iter().chain(s.channel(Channel::C)).all(|w| w.norm() == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = params(rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.5..1.0));
            let z = rng.random_range(-30.0..30.0);
            let t = rng.random_range(-30.0..30.0);
            let g = RetardedGrid::time_only(t, t + 1.0, 2).unwrap();
            let snap = analytic_fields(z, &g, &p);
            let sum: f64 = snap.at(0).iter().map(|w| w.norm_sqr()).sum();
            let w = fundamental_rabi(z, t, &p);
            assert!((sum - w * w).abs() <= 1e-14 * w * w + 1e-300);
            assert!(snap.at(0).iter().all(|w| w.re >= 0.0 && w.im == 0.0));
        }
    }

    #[test]
    fn area_law_examples() {
        let two_pi = 2.0 * PI;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = params(rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.5..1.0));
            let r = analytic_areas(rng.random_range(-100.0..100.0), &p);
            let [a, b, c, d] = r.theta;
            assert!(((a * a + c * c).sqrt() - two_pi * p.u.sin()).abs() < 1e-12);
            assert!(((b * b + d * d).sqrt() - two_pi * p.u.cos()).abs() < 1e-12);
            assert!((r.theta_total - two_pi).abs() < 1e-12);
        }
        let p = params(0.4, 0.75);
        let r = analytic_areas(0.0, &p);
        assert!((r.theta[0] - 2f64.sqrt() * PI * 0.4f64.sin()).abs() < 1e-14);

        let p = params(FRAC_PI_4, 0.75);
        let r = analytic_areas(200.0 / p.kappa, &p);
        assert!((r.theta[2] - 2f64.sqrt() * PI).abs() < 1e-12);
        assert!((r.theta[3] - 2f64.sqrt() * PI).abs() < 1e-12);
        assert!(r.theta[0] < 1e-12 && r.theta[1] < 1e-12);
    }

    #[test]
    fn quadrature_reproduces_area_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let p = params(rng.random_range(0.05..FRAC_PI_2), rng.random_range(0.5..1.0));
            let z = rng.random_range(-10.0..10.0) / p.kappa;
            let g = RetardedGrid::time_only(-40.0, 40.0, 4096).unwrap().recentred(p.peak_time(z));
            let snap = analytic_fields(z, &g, &p);
            let closed = analytic_areas(z, &p);
            for ch in Channel::ALL {
                let num = pulse_area(snap.channel(ch), &g);
                let exact = closed.theta[ch.index()];
                assert!((num - exact).abs() <= 1e-6 * exact.max(1e-3), "{ch}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn group_velocity_examples() {
        let v = group_velocities(&SolitonParams::new(1.0, 0.3, 1.0, 2.0).unwrap());
        assert!((v.v_in - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v.v_out, 1.0);
        assert_eq!(v.drift_out, 0.0);

        let v = group_velocities(&SolitonParams::new(1.0, 0.3, 0.5, 2.0).unwrap());
        assert_eq!(v.v_in, v.v_out);

        let v = group_velocities(&SolitonParams::new(1.0, 0.3, 0.75, 1.0).unwrap());
        assert!((v.v_in - 1.0 / 1.75).abs() < 1e-15);
        assert!((v.v_out - 0.8).abs() < 1e-15);
        assert!(v.v_out > v.v_in);
    }

    #[test]
    fn peak_time_is_the_maximum() {
        let p = params(FRAC_PI_4, 0.75);
        for kz in [-8.0, -1.0, 0.0, 2.0, 9.0] {
            let z = kz / p.kappa;
            let tp = p.peak_time(z);
            let w0 = fundamental_rabi(z, tp, &p);
            assert!(w0 >= fundamental_rabi(z, tp + 1e-4, &p));
            assert!(w0 >= fundamental_rabi(z, tp - 1e-4, &p));
        }
        // oracle: brute-force maximum on a fine grid
        let z = 0.7 / p.kappa;
        let (mut best_t, mut best) = (0.0, 0.0);
        for i in 0..200_001 {
            let t = -10.0 + i as f64 * 1e-4;
            let w = fundamental_rabi(z, t, &p);
            if w > best {
                best = w;
                best_t = t;
            }
        }
        assert!((best_t - p.peak_time(z)).abs() < 1e-4);
    }
}
