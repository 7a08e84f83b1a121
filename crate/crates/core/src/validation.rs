//! Desk-scale acceptance suite. Each criterion runs a fixed experiment and
//! reports a list of named checks; the CLI `validate` command and the
//! acceptance tests both go through [`Suite`].

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{
    analytic_areas, analytic_fields, analytic_fields_split, group_velocities, kappa_average,
    SolitonParams,
};
use crate::bloch::{detuning_rule, integrate_node, integrate_node_with, max_rabi, StabilityPolicy};
use crate::config::Resolution;
use crate::diagnostics::{fit_sech, fit_sech_points, lab_profile, pulse_area, snapshot_areas, track_peaks};
use crate::error::Result;
use crate::grid::{Channel, FieldSnapshot, RetardedGrid};
use crate::medium::{DensityMatrix4, LineShape, MediumSpec};
use crate::output::{write_areas, write_fields};
use crate::pulse::{generate_pulse, PulseShape, PulseSpec};
use crate::solver::{propagate, PropagationResult, Scheme, SolverConfig};

const MU: f64 = 1.0;
const TAU: f64 = 1.0;
/// Sharp-line absorption parameter for `MU`, `TAU`; one absorption length is `1 / KAPPA`.
const KAPPA: f64 = MU * TAU / 2.0;
const STEPS_PER_LENGTH: f64 = 200.0;
const N_T: usize = 4096;
const HALF_WINDOW: f64 = 40.0;

const FIG2_AREAS: [f64; 4] = [1.4, 0.9, 0.002, 0.001];
pub const FIG2_WIDTH: f64 = 3.0;
pub const FIG2_CENTER: f64 = -25.0;
/// Medium length in absorption lengths for the transfer run.
pub const FIG2_LENGTH: f64 = 12.0;

#[derive(Clone, Copy, Debug)]
pub struct Criterion {
    pub id: u8,
    pub key: &'static str,
    pub title: &'static str,
    pub runtime_limit: Option<Duration>,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

pub const CRITERIA: [Criterion; 8] = [
    Criterion { id: 1, key: "area-conservation", title: "analytic total area is 2 pi", runtime_limit: secs(5) },
    Criterion { id: 2, key: "asymptotic-sech", title: "regime I/III pulses are sech with areas 2 pi sin u, 2 pi cos u", runtime_limit: secs(10) },
    Criterion { id: 3, key: "kappa", title: "absorption parameter: sharp-line limit and Gauss-Hermite accuracy", runtime_limit: None },
    Criterion { id: 4, key: "two-level", title: "two-level 2 pi stability and 1 pi attenuation", runtime_limit: secs(120) },
    Criterion { id: 5, key: "round-trip", title: "solver reproduces the analytic area evolution", runtime_limit: secs(300) },
    Criterion { id: 6, key: "transfer", title: "square-Gaussian pulse transfer at desk scale", runtime_limit: secs(600) },
    Criterion { id: 7, key: "group-velocity", title: "peak drift matches alpha^2 kappa tau and beta^2 kappa tau", runtime_limit: None },
    Criterion { id: 8, key: "invariants", title: "density-matrix, integrator and solver invariants", runtime_limit: None },
];

pub fn criterion(id: u8) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id == id)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value < limit`.
    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, passed: value < limit }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, passed: value >= limit }
    }
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub criterion: Criterion,
    pub checks: Vec<Check>,
    /// Set when the experiment itself could not run.
    pub error: Option<String>,
    pub elapsed: Duration,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn status(&self) -> &'static str {
        if self.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    }

    pub fn render(&self) -> String {
        let c = &self.criterion;
        let mut s = format!(
            "{} [{}] {}: {} ({:.1} s)\n",
            self.status(),
            c.id,
            c.key,
            c.title,
            self.elapsed.as_secs_f64()
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("    error: {e}\n"));
        }
        for k in &self.checks {
            let mark = if k.passed { "ok  " } else { "FAIL" };
            s.push_str(&format!("    {mark} {}: {:.4e} (limit {:.4e})\n", k.name, k.value, k.limit));
        }
        s
    }
}

/// Intentional defects for exercising the suite itself.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Fault {
    /// Scales kappa in the numerator of the closed-form fundamental Rabi
    /// frequency only, which breaks total-area conservation.
    pub kappa_factor: Option<f64>,
}

pub struct Suite {
    pub resolution: Resolution,
    pub fault: Fault,
    round_trip: OnceLock<(std::result::Result<PropagationResult, String>, Duration)>,
}

impl Suite {
    pub fn new(resolution: Resolution, fault: Fault) -> Self {
        Suite { resolution, fault, round_trip: OnceLock::new() }
    }

    pub fn run(&self, id: u8) -> CriterionReport {
        let criterion = *criterion(id).expect("known criterion id");
        let start = Instant::now();
        let cached = self.round_trip.get().map(|(_, d)| *d);
        let outcome = match id {
            1 => self.area_conservation(),
            2 => self.asymptotic_sech(),
            3 => self.kappa(),
            4 => self.two_level(),
            5 => self.round_trip_areas(),
            6 => self.transfer(),
            7 => self.group_velocity(),
            _ => self.invariants(),
        };
        let mut elapsed = start.elapsed();
        if id == 5 {
            // charge the shared run to this criterion even when another one triggered it
            elapsed += cached.unwrap_or_default();
        }
        let (mut checks, error) = match outcome {
            Ok(c) => (c, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        if let (Some(limit), None) = (criterion.runtime_limit, &error) {
            checks.push(Check::below("runtime [s]", elapsed.as_secs_f64(), limit.as_secs_f64()));
        }
        log::info!("criterion {id} finished in {:.1} s", elapsed.as_secs_f64());
        CriterionReport { criterion, checks, error, elapsed }
    }

    pub fn run_all(&self, ids: &[u8]) -> Vec<CriterionReport> {
        ids.iter().map(|&id| self.run(id)).collect()
    }

    fn scaled(&self, n: usize) -> usize {
        ((n as f64 * self.resolution.factor()).round() as usize).max(2)
    }

    fn soliton(&self, u: f64) -> SolitonParams {
        SolitonParams::new(TAU, u, 0.75, KAPPA).expect("valid soliton parameters")
    }

    fn area_conservation(&self) -> Result<Vec<Check>> {
        let p = self.soliton(FRAC_PI_4);
        let numerator_kappa = p.kappa * self.fault.kappa_factor.unwrap_or(1.0);
        let base = RetardedGrid::time_only(-HALF_WINDOW, HALF_WINDOW, N_T)?;
        let (mut closed, mut quad) = (0.0f64, 0.0f64);
        for k in 0..500 {
            let z = (-50.0 + 100.0 * k as f64 / 499.0) / p.kappa;
            closed = closed.max((analytic_areas(z, &p).theta_total - 2.0 * PI).abs() / (2.0 * PI));
            let grid = base.recentred(p.peak_time(z));
            let snap = analytic_fields_split(z, &grid, &p, numerator_kappa);
            quad = quad.max((snapshot_areas(&snap, &grid).theta_total - 2.0 * PI).abs() / (2.0 * PI));
        }
        Ok(vec![
            Check::below("closed form max |theta_T - 2pi| / 2pi", closed, 1e-12),
            Check::below("grid quadrature max |theta_T - 2pi| / 2pi", quad, 1e-6),
        ])
    }

    fn asymptotic_sech(&self) -> Result<Vec<Check>> {
        let base = RetardedGrid::time_only(-HALF_WINDOW, HALF_WINDOW, N_T)?;
        let mut checks = Vec::new();
        for (label, u) in [("pi/6", FRAC_PI_6), ("pi/4", FRAC_PI_4), ("pi/3", FRAC_PI_3)] {
            let p = self.soliton(u);
            let expected = [2.0 * PI * u.sin(), 2.0 * PI * u.cos()];
            for (kz, pair) in [(-30.0, [Channel::A, Channel::B]), (30.0, [Channel::C, Channel::D])] {
                let z = kz / p.kappa;
                let grid = base.recentred(p.peak_time(z));
                let snap = analytic_fields(z, &grid, &p);
                for (ch, want) in pair.into_iter().zip(expected) {
                    let fit = fit_sech(snap.channel(ch), &grid)?;
                    checks.push(Check::below(
                        format!("u={label} kz={kz} {ch} sech residual"),
                        fit.rms_residual,
                        1e-4,
                    ));
                    checks.push(Check::below(
                        format!("u={label} kz={kz} {ch} area relative error"),
                        (fit.area() - want).abs() / want,
                        1e-4,
                    ));
                }
            }
        }
        Ok(checks)
    }

    fn kappa(&self) -> Result<Vec<Check>> {
        let sharp = kappa_average(MU, TAU, LineShape::Gaussian { t2_star: 1e6 * TAU }, 64)?;
        let gh = kappa_average(MU, TAU, LineShape::Gaussian { t2_star: TAU }, 64)?;
        let oracle = kappa_trapezoid(MU, TAU, TAU, 1_000_000);
        Ok(vec![
            Check::below("T2* = 1e6 tau vs mu tau / 2", (sharp / (MU * TAU / 2.0) - 1.0).abs(), 1e-6),
            Check::below("64-node Gauss-Hermite vs trapezoid at T2* = tau", (gh / oracle - 1.0).abs(), 1e-8),
        ])
    }

    fn two_level_run(&self, area: f64, n_t: usize, n_z: usize) -> Result<PropagationResult> {
        let length = 10.0 / KAPPA;
        let grid = RetardedGrid::new(-HALF_WINDOW, HALF_WINDOW, n_t, length, n_z)?;
        let spec = PulseSpec { shape: PulseShape::Sech, area, width: TAU, center: -20.0, channel: Channel::A };
        let mut init = FieldSnapshot::zeros(0.0, n_t);
        init.omega[0] = generate_pulse(&spec, &grid)?;
        let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: 1.0 / KAPPA, stability_policy: StabilityPolicy::Warn };
        propagate(&init, &MediumSpec::sharp_line(MU, 1.0, length), &grid, &cfg)
    }

    fn two_level_default(&self, area: f64) -> Result<PropagationResult> {
        self.two_level_run(area, self.scaled(N_T), self.scaled((10.0 * STEPS_PER_LENGTH) as usize))
    }

    fn two_level(&self) -> Result<Vec<Check>> {
        let n_t = self.scaled(N_T);
        let two_pi = self.two_level_default(2.0 * PI)?;
        let grid = RetardedGrid::new(-HALF_WINDOW, HALF_WINDOW, n_t, 10.0 / KAPPA, 1)?;
        let worst = two_pi
            .area_records
            .iter()
            .map(|r| (r.theta[0] - 2.0 * PI).abs() / (2.0 * PI))
            .fold(0.0, f64::max);
        let out = two_pi.final_snapshot().expect("final snapshot");
        let fit = fit_sech(out.channel(Channel::A), &grid)?;

        let one_pi = self.two_level_default(PI)?;
        // one sample per absorption length
        let samples: Vec<f64> = one_pi.snapshots.iter().map(|s| pulse_area(s.channel(Channel::A), &grid)).collect();
        let rise = samples.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        log::info!("1 pi areas per absorption length [pi]: {:?}", samples.iter().map(|a| a / PI).collect::<Vec<_>>());
        Ok(vec![
            Check::below("2pi max |theta - 2pi| / 2pi over 10 absorption lengths", worst, 5e-3),
            Check::below("2pi output sech residual", fit.rms_residual, 1e-2),
            Check::below("1pi largest area change between absorption lengths [rad]", rise, 0.0),
        ])
    }

    fn round_trip(&self) -> std::result::Result<&PropagationResult, String> {
        self.round_trip
            .get_or_init(|| {
                let start = Instant::now();
                let p = self.soliton(FRAC_PI_4);
                let length = 16.0 / KAPPA;
                let grid = match RetardedGrid::new(
                    -HALF_WINDOW,
                    HALF_WINDOW,
                    self.scaled(N_T),
                    length,
                    self.scaled((16.0 * STEPS_PER_LENGTH) as usize),
                ) {
                    Ok(g) => g,
                    Err(e) => return (Err(e.to_string()), start.elapsed()),
                };
                let init = analytic_fields(-8.0 / KAPPA, &grid, &p);
                let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: length / 8.0, stability_policy: StabilityPolicy::Warn };
                let run = propagate(&init, &MediumSpec::sharp_line(MU, 0.75, length), &grid, &cfg).map_err(|e| e.to_string());
                (run, start.elapsed())
            })
            .0
            .as_ref()
            .map_err(Clone::clone)
    }

    fn round_trip_areas(&self) -> Result<Vec<Check>> {
        let run = self.round_trip().map_err(crate::error::Error::Domain)?;
        let p = self.soliton(FRAC_PI_4);
        let z_entry = -8.0 / KAPPA;
        let scale = [p.u.sin(), p.u.cos(), p.u.sin(), p.u.cos()].map(|s| 2.0 * PI * s);
        let mut worst = [0.0f64; 4];
        let mut worst_total = 0.0f64;
        for r in &run.area_records {
            let a = analytic_areas(r.z + z_entry, &p);
            for c in 0..4 {
                worst[c] = worst[c].max((r.theta[c] - a.theta[c]).abs() / scale[c]);
            }
            worst_total = worst_total.max((r.theta_total - 2.0 * PI).abs() / (2.0 * PI));
        }
        let mut checks: Vec<Check> = Channel::ALL
            .iter()
            .map(|ch| Check::below(format!("max |theta_{ch} - analytic| / asymptotic area"), worst[ch.index()], 0.02))
            .collect();
        checks.push(Check::below("max |theta_T - 2pi| / 2pi", worst_total, 0.01));
        Ok(checks)
    }

    fn group_velocity(&self) -> Result<Vec<Check>> {
        let run = self.round_trip().map_err(crate::error::Error::Domain)?;
        let v = group_velocities(&self.soliton(FRAC_PI_4));
        let slopes = track_peaks(run);
        let mut checks = Vec::new();
        for ch in Channel::ALL {
            let want = if ch.is_input() { v.drift_in } else { v.drift_out };
            let got = slopes[ch.index()].as_ref().map_err(|e| crate::error::Error::Tracking(e.to_string()))?;
            checks.push(Check::below(format!("channel {ch} drift relative error"), (got - want).abs() / want, 0.02));
        }
        Ok(checks)
    }

    /// The desk-scale transfer run: sharp line, square-Gaussian inputs.
    pub fn transfer_run(&self) -> Result<(PropagationResult, RetardedGrid)> {
        let length = FIG2_LENGTH / KAPPA;
        let n_z = self.scaled((FIG2_LENGTH * STEPS_PER_LENGTH) as usize);
        let grid = RetardedGrid::new(-HALF_WINDOW, HALF_WINDOW, self.scaled(N_T), length, n_z)?;
        let mut init = FieldSnapshot::zeros(0.0, grid.n_t);
        for (ch, a) in Channel::ALL.into_iter().zip(FIG2_AREAS) {
            let spec = PulseSpec {
                shape: PulseShape::SquareGaussian,
                area: a * PI,
                width: FIG2_WIDTH,
                center: FIG2_CENTER,
                channel: ch,
            };
            init.omega[ch.index()] = generate_pulse(&spec, &grid)?;
        }
        let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: length / 5.0, stability_policy: StabilityPolicy::Warn };
        let run = propagate(&init, &MediumSpec::sharp_line(MU, 0.75, length), &grid, &cfg)?;
        Ok((run, grid))
    }

    fn transfer(&self) -> Result<Vec<Check>> {
        let (run, grid) = self.transfer_run()?;
        let recs = &run.area_records;
        let two_pi = 2.0 * PI;
        let expected_initial = FIG2_AREAS[0].hypot(FIG2_AREAS[1]) * PI;
        let first = &recs[0];
        let last = recs.last().expect("records");

        let mut running_max = f64::NEG_INFINITY;
        let mut ripple = 0.0f64;
        for r in recs {
            running_max = running_max.max(r.theta_total);
            ripple = ripple.max((running_max - r.theta_total) / two_pi);
        }
        let formed = recs.iter().position(|r| (r.theta_total - two_pi).abs() / two_pi <= 0.02);
        let formation_depth = formed.map_or(f64::INFINITY, |k| recs[k].z / grid.z_max);
        let spread = |f: &dyn Fn(&crate::diagnostics::AreaRecord) -> f64| {
            let tail = &recs[formed.unwrap_or(recs.len() - 1)..];
            let mean = tail.iter().map(f).sum::<f64>() / tail.len() as f64;
            tail.iter().map(|r| (f(r) - mean).abs() / mean).fold(0.0, f64::max)
        };
        let out = run.final_snapshot().expect("final snapshot");
        let fits = [Channel::C, Channel::D].map(|ch| fit_sech(out.channel(ch), &grid).map(|f| f.rms_residual));
        let u_eff = last.theta_1.atan2(last.theta_2);

        let mut checks = vec![
            Check::below("(i) initial |theta_T - sqrt(1.4^2+0.9^2) pi| / expected", (first.theta_total - expected_initial).abs() / expected_initial, 0.01),
            Check::below("(ii) largest theta_T drop below running maximum / 2pi", ripple, 5e-3),
            Check::below("(ii) depth where theta_T first within 2% of 2pi, / z_max", formation_depth, 1.0),
            Check::at_least("(iii) theta_c growth factor", last.theta[2] / first.theta[2], 100.0),
            Check::at_least("(iii) theta_d growth factor", last.theta[3] / first.theta[3], 100.0),
            Check::below("(iii) theta_a / theta_1 at exit", last.theta[0] / last.theta_1, 0.05),
            Check::below("(iii) theta_b / theta_2 at exit", last.theta[1] / last.theta_2, 0.05),
            Check::below("(iii) theta_1 deviation from its mean after formation", spread(&|r| r.theta_1), 0.03),
            Check::below("(iii) theta_2 deviation from its mean after formation", spread(&|r| r.theta_2), 0.03),
            Check::below("exit |theta_c - 2pi sin u_eff| / 2pi sin u_eff", (last.theta[2] - two_pi * u_eff.sin()).abs() / (two_pi * u_eff.sin()), 0.05),
            Check::below("exit |theta_d - 2pi cos u_eff| / 2pi cos u_eff", (last.theta[3] - two_pi * u_eff.cos()).abs() / (two_pi * u_eff.cos()), 0.05),
        ];
        for (ch, fit) in [Channel::C, Channel::D].into_iter().zip(fits) {
            checks.push(Check::below(format!("(iv) exit {ch} sech residual"), fit?, 0.02));
        }
        Ok(checks)
    }

    fn invariants(&self) -> Result<Vec<Check>> {
        let mut checks = density_matrix_checks()?;
        checks.push(rk4_order()?);
        checks.push(gauss_hermite_moments()?);
        checks.push(self.heun_vs_euler()?);
        checks.push(self.grid_refinement()?);
        checks.push(determinism()?);
        checks.push(free_streaming()?);
        checks.push(lab_width_ratio()?);
        Ok(checks)
    }

    fn heun_vs_euler(&self) -> Result<Check> {
        let length = 2.0 / KAPPA;
        let dz = 0.1 / KAPPA;
        let run = |scheme, n_z: usize| -> Result<FieldSnapshot> {
            let grid = RetardedGrid::new(-20.0, 20.0, 1024, length, n_z)?;
            let spec = PulseSpec { shape: PulseShape::Sech, area: 2.0 * PI, width: TAU, center: -8.0, channel: Channel::A };
            let mut init = FieldSnapshot::zeros(0.0, grid.n_t);
            init.omega[0] = generate_pulse(&spec, &grid)?;
            let cfg = SolverConfig { scheme, snapshot_every: length, stability_policy: StabilityPolicy::Warn };
            let res = propagate(&init, &MediumSpec::sharp_line(MU, 1.0, length), &grid, &cfg)?;
            Ok(res.final_snapshot().expect("final").clone())
        };
        let n = (length / dz).round() as usize;
        let reference = run(Scheme::Heun, 64 * n)?;
        let err = |s: &FieldSnapshot| {
            s.channel(Channel::A)
                .iter()
                .zip(reference.channel(Channel::A))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let heun = err(&run(Scheme::Heun, n)?);
        let euler = err(&run(Scheme::Euler, 4 * n)?);
        Ok(Check::below("Heun(dz) error / Euler(dz/4) error", heun / euler, 1.0))
    }

    fn grid_refinement(&self) -> Result<Check> {
        let n_t = self.scaled(N_T);
        let n_z = self.scaled((10.0 * STEPS_PER_LENGTH) as usize);
        let coarse = self.two_level_run(2.0 * PI, n_t, n_z)?;
        let fine = self.two_level_run(2.0 * PI, 2 * n_t - 1, 2 * n_z)?;
        let a = coarse.area_records.last().expect("records").theta_total;
        let b = fine.area_records.last().expect("records").theta_total;
        Ok(Check::below("theta_T change under (dt, dz) halving", (a - b).abs() / a, 2e-3))
    }
}

/// `kappa` from a uniform trapezoid over the Gaussian line, truncated at 12 standard deviations.
pub fn kappa_trapezoid(mu: f64, tau: f64, t2_star: f64, n: usize) -> f64 {
    let sigma = 1.0 / t2_star;
    let half = 12.0 * sigma;
    let h = 2.0 * half / (n - 1) as f64;
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let f = |d: f64| norm * (-0.5 * (d / sigma).powi(2)).exp() / (d * d + 1.0 / (tau * tau));
    let mut s = 0.5 * (f(-half) + f(half));
    for i in 1..n - 1 {
        s += f(-half + i as f64 * h);
    }
    mu / (2.0 * tau) * s * h
}

/// Smooth complex fields: a few Gaussian bumps with random amplitude,
/// width, centre and phase on every channel.
fn random_smooth_fields(rng: &mut ChaCha8Rng, grid: &RetardedGrid) -> FieldSnapshot {
    let span = grid.t_max - grid.t_min;
    let mut snap = FieldSnapshot::zeros(0.0, grid.n_t);
    for ch in Channel::ALL {
        let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.5..2.0),
                    rng.random_range(0.05..0.2) * span,
                    grid.t_min + rng.random_range(0.2..0.8) * span,
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        for (i, t) in grid.times().enumerate() {
            snap.channel_mut(ch)[i] = bumps
                .iter()
                .map(|&(a, w, c, ph)| crate::C64::from_polar(a * (-((t - c) / w).powi(2)).exp(), ph))
                .sum();
        }
    }
    snap
}

fn scaled_random_fields(seed: u64, grid: &RetardedGrid, dt_rate: f64) -> FieldSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = random_smooth_fields(&mut rng, grid);
    let scale = dt_rate / (grid.dt() * max_rabi(&fields));
    for c in fields.omega.iter_mut() {
        c.iter_mut().for_each(|v| *v *= scale);
    }
    fields
}

fn density_matrix_checks() -> Result<Vec<Check>> {
    let grid = RetardedGrid::time_only(0.0, 1e4, 100_001)?;
    let fields = scaled_random_fields(7, &grid, 0.1);
    let seed = crate::medium::make_seed_state(0.6, 0.4)?;
    let (mut herm, mut pop_low, mut pop_high) = (0.0f64, 0.0f64, 0.0f64);
    let last = integrate_node_with(&seed, 0.5, &fields, grid.dt(), |_, rho: &DensityMatrix4| {
        herm = herm.max(rho.hermiticity_error());
        for p in rho.populations() {
            pop_low = pop_low.max(-p);
            pop_high = pop_high.max(p - 1.0);
        }
    });

    // purity at the sampling density of a desk-scale run
    let grid = RetardedGrid::time_only(-40.0, 40.0, N_T)?;
    let fields = scaled_random_fields(13, &grid, 0.05);
    let pure = crate::medium::make_seed_state(1.0, 0.0)?;
    let mut purity = 0.0f64;
    integrate_node_with(&pure, 0.5, &fields, grid.dt(), |_, rho: &DensityMatrix4| {
        purity = purity.max((rho.purity() - 1.0).abs());
    });
    Ok(vec![
        Check::below("|tr rho - 1| after 1e5 RK4 steps", (last.trace() - 1.0).norm(), 1e-10),
        Check::below("Hermiticity error", herm, 1e-12),
        Check::below("population below 0", pop_low, 1e-8),
        Check::below("population above 1", pop_high, 1e-8),
        Check::below("purity drift, single node", purity, 1e-8),
    ])
}

fn rk4_order() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let template = RetardedGrid::time_only(0.0, 10.0, 2)?;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(2.0..8.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let sample = |steps: usize| -> Result<DensityMatrix4> {
        let grid = RetardedGrid::time_only(template.t_min, template.t_max, steps + 1)?;
        let mut f = FieldSnapshot::zeros(0.0, grid.n_t);
        for (c, ch) in f.omega.iter_mut().enumerate() {
            for (i, t) in grid.times().enumerate() {
                ch[i] = bumps[3 * c..3 * c + 3]
                    .iter()
                    .map(|&(a, w, m, ph)| crate::C64::from_polar(a * (-((t - m) / w).powi(2)).exp(), ph))
                    .sum();
            }
        }
        let seed = crate::medium::make_seed_state(0.7, 0.3)?;
        Ok(integrate_node(&seed, 0.4, &f, grid.dt()).1)
    };
    let n = 200;
    let reference = sample(64 * n)?;
    let err = |rho: &DensityMatrix4| {
        let mut e = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                e = e.max((rho.0[i][j] - reference.0[i][j]).norm());
            }
        }
        e
    };
    let coarse = err(&sample(n)?);
    let fine = err(&sample(2 * n)?);
    Ok(Check::at_least("RK4 empirical order", (coarse / fine).log2(), 3.8))
}

fn gauss_hermite_moments() -> Result<Check> {
    let t2 = 2.0;
    let (nodes, weights) = detuning_rule(LineShape::Gaussian { t2_star: t2 }, 64)?;
    let m0: f64 = weights.iter().sum();
    let m2: f64 = nodes.iter().zip(&weights).map(|(d, w)| w * d * d).sum();
    Ok(Check::below("Gauss-Hermite |<1> - 1| + |<D^2> - 1/T2*^2|", (m0 - 1.0).abs() + (m2 - 1.0 / (t2 * t2)).abs(), 1e-10))
}

fn determinism() -> Result<Check> {
    let grid = RetardedGrid::new(-20.0, 20.0, 512, 1.0, 20)?;
    let medium = MediumSpec {
        mu: MU,
        line: LineShape::Gaussian { t2_star: 2.0 },
        n_detuning: 8,
        alpha_sq: 0.75,
        beta_sq: 0.25,
        length: 1.0,
    };
    let mut init = FieldSnapshot::zeros(0.0, grid.n_t);
    for (ch, a) in Channel::ALL.into_iter().zip(FIG2_AREAS) {
        let spec = PulseSpec { shape: PulseShape::Sech, area: a * PI, width: TAU, center: -5.0, channel: ch };
        init.omega[ch.index()] = generate_pulse(&spec, &grid)?;
    }
    let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: 0.5, stability_policy: StabilityPolicy::Warn };
    let bytes = |res: &PropagationResult| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_areas(&mut buf, &res.area_records)?;
        for s in &res.snapshots {
            write_fields(&mut buf, s, &grid)?;
        }
        Ok(buf)
    };
    let first = bytes(&propagate(&init, &medium, &grid, &cfg)?)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().expect("thread pool");
    let second = bytes(&pool.install(|| propagate(&init, &medium, &grid, &cfg))?)?;
    let differing = first.iter().zip(&second).filter(|(a, b)| a != b).count() + first.len().abs_diff(second.len());
    Ok(Check::below("differing CSV bytes between reruns", differing as f64, 1.0))
}

fn free_streaming() -> Result<Check> {
    let grid = RetardedGrid::new(-20.0, 20.0, 512, 2.0, 40)?;
    let mut init = FieldSnapshot::zeros(0.0, grid.n_t);
    for (ch, a) in Channel::ALL.into_iter().zip([2.0, 1.0, 0.5, 0.25]) {
        let spec = PulseSpec { shape: PulseShape::Gaussian, area: a * PI, width: 2.0, center: 0.0, channel: ch };
        init.omega[ch.index()] = generate_pulse(&spec, &grid)?;
    }
    let medium = MediumSpec { mu: 0.0, ..MediumSpec::sharp_line(1.0, 0.75, 2.0) };
    let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: 0.1, stability_policy: StabilityPolicy::Warn };
    let res = propagate(&init, &medium, &grid, &cfg)?;
    let worst = res
        .snapshots
        .iter()
        .flat_map(|s| s.omega.iter().zip(&init.omega).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm())))
        .fold(0.0, f64::max);
    Ok(Check::below("mu = 0 max |Omega(z) - Omega(0)|", worst, 1e-14))
}

/// Spatial width ratio of output and input pulses built from analytic
/// snapshots through the retarded-to-lab transform.
fn lab_width_ratio() -> Result<Check> {
    let p = SolitonParams::new(TAU, FRAC_PI_4, 0.75, KAPPA)?;
    let v = group_velocities(&p);
    let base = RetardedGrid::time_only(-HALF_WINDOW, HALF_WINDOW, 1024)?;
    let width_at = |z_c: f64, ch: Channel| -> Result<f64> {
        let t_lab = z_c + p.peak_time(z_c);
        let grid = base.recentred(p.peak_time(z_c));
        let snaps: Vec<FieldSnapshot> = (0..=600)
            .map(|k| {
                let z = z_c - 6.0 + 0.02 * k as f64;
                analytic_fields(z, &grid, &p)
            })
            .collect();
        let (zs, ys): (Vec<f64>, Vec<f64>) = lab_profile(&snaps, ch, &grid, t_lab).into_iter().unzip();
        Ok(fit_sech_points(&zs, &ys)?.width)
    };
    let w_in = width_at(-20.0 / p.kappa, Channel::A)?;
    let w_out = width_at(20.0 / p.kappa, Channel::C)?;
    let expected = (1.0 + v.drift_in) / (1.0 + v.drift_out);
    Ok(Check::below("lab width ratio out/in vs drift-factor ratio", ((w_out / w_in) / expected - 1.0).abs(), 0.05))
}
