//! Depth marching of the coupled Maxwell-von Neumann system.
//!
//! At every depth the detuning ensemble is integrated across the whole
//! retarded-time axis under the current fields, and the averaged
//! coherences drive `dOmega/dZ = -i mu <rho>`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{
    build_hamiltonian, commutator, detuning_rule, integrate_node_with, max_rabi, StabilityPolicy,
};
use crate::diagnostics::{peak_position, snapshot_areas, AreaRecord, PeakSample};
use crate::error::{Error, Result};
use crate::grid::{Channel, FieldSnapshot, RetardedGrid};
use crate::medium::{DensityMatrix4, MediumSpec, Matrix4c, ZERO};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    #[default]
    Heun,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Depth interval between stored snapshots.
    pub snapshot_every: f64,
    pub stability_policy: StabilityPolicy,
}

impl SolverConfig {
    pub fn validate(&self, dz: f64) -> Result<()> {
        if !(dz > 0.0) {
            return Err(Error::domain("dz must be > 0"));
        }
        // allow rounding slack when snapshot_every was computed as a multiple of dz
        if !(self.snapshot_every >= dz * (1.0 - 1e-9)) {
            return Err(Error::domain(format!(
                "snapshot_every ({}) must be >= dz ({dz})",
                self.snapshot_every
            )));
        }
        Ok(())
    }

    fn stride(&self, dz: f64) -> usize {
        ((self.snapshot_every / dz).round() as usize).max(1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropagationResult {
    pub snapshots: Vec<FieldSnapshot>,
    /// One record per depth step, including the entrance.
    pub area_records: Vec<AreaRecord>,
    pub peak_tracks: [Vec<PeakSample>; 4],
    /// Sum over channels of integral |Omega|^2 dT per depth step.
    pub energies: Vec<f64>,
}

impl PropagationResult {
    pub fn final_snapshot(&self) -> Option<&FieldSnapshot> {
        self.snapshots.last()
    }
}

/// `dOmega/dZ` for channels a, b, c, d from (rho_13, rho_14, rho_23, rho_24).
pub fn maxwell_rhs(coherences: [C64; 4], mu: f64) -> [C64; 4] {
    coherences.map(|c| -I * mu * c)
}

/// Ensemble integrator bound to one medium and grid.
pub struct Propagator {
    grid: RetardedGrid,
    medium: MediumSpec,
    seed: DensityMatrix4,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    policy: StabilityPolicy,
}

impl Propagator {
    pub fn new(medium: MediumSpec, grid: RetardedGrid, policy: StabilityPolicy) -> Result<Self> {
        medium.validate()?;
        grid.validate()?;
        let (nodes, weights) = detuning_rule(medium.line, medium.n_detuning)?;
        Ok(Self { grid, medium, seed: medium.seed_state()?, nodes, weights, policy })
    }

    fn guard(&self, fields: &FieldSnapshot) -> Result<()> {
        let max_detuning = self.nodes.iter().map(|d| d.abs()).fold(0.0, f64::max);
        self.policy.check(self.grid.dt(), max_rabi(fields).max(max_detuning))
    }

    /// Ensemble-averaged (rho_13, rho_14, rho_23, rho_24) at every time sample.
    pub fn averaged_coherences(&self, fields: &FieldSnapshot) -> [Vec<C64>; 4] {
        let dt = self.grid.dt();
        let n = fields.len();
        let run = |delta: f64| {
            let mut out: [Vec<C64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
            integrate_node_with(&self.seed, delta, fields, dt, |_, rho| {
                for (o, c) in out.iter_mut().zip(rho.coherences()) {
                    o.push(c);
                }
            });
            out
        };
        if self.nodes.len() == 1 {
            let mut out = run(self.nodes[0]);
            if self.weights[0] != 1.0 {
                out.iter_mut().flatten().for_each(|c| *c *= self.weights[0]);
            }
            return out;
        }
        let per_node: Vec<[Vec<C64>; 4]> = self.nodes.par_iter().map(|&d| run(d)).collect();
        // fixed node order keeps the reduction bit-reproducible
        let mut acc: [Vec<C64>; 4] = std::array::from_fn(|_| vec![ZERO; n]);
        for (w, node) in self.weights.iter().zip(&per_node) {
            for (a, c) in acc.iter_mut().zip(node) {
                for (x, y) in a.iter_mut().zip(c) {
                    *x += *w * y;
                }
            }
        }
        acc
    }

    /// Ensemble-averaged full density matrix at every time sample.
    pub fn averaged_density(&self, fields: &FieldSnapshot) -> Vec<DensityMatrix4> {
        let mut acc = vec![DensityMatrix4::zeros(); fields.len()];
        for (&delta, &w) in self.nodes.iter().zip(&self.weights) {
            integrate_node_with(&self.seed, delta, fields, self.grid.dt(), |k, rho| {
                for i in 0..4 {
                    for j in 0..4 {
                        acc[k].0[i][j] += w * rho.0[i][j];
                    }
                }
            });
        }
        acc
    }

    /// `dOmega/dZ` at every time sample.
    pub fn field_derivative(&self, fields: &FieldSnapshot) -> Result<[Vec<C64>; 4]> {
        if self.medium.mu == 0.0 {
            return Ok(std::array::from_fn(|_| vec![ZERO; fields.len()]));
        }
        self.guard(fields)?;
        let mut coh = self.averaged_coherences(fields);
        for k in 0..fields.len() {
            let d = maxwell_rhs([coh[0][k], coh[1][k], coh[2][k], coh[3][k]], self.medium.mu);
            for (ch, v) in coh.iter_mut().zip(d) {
                ch[k] = v;
            }
        }
        Ok(coh)
    }

    /// Advance `fields` by one depth step.
    pub fn step(&self, fields: &FieldSnapshot, dz: f64, scheme: Scheme) -> Result<FieldSnapshot> {
        let d0 = self.field_derivative(fields)?;
        let mut next = fields.clone();
        next.z = fields.z + dz;
        axpy_fields(&mut next, dz, &d0);
        if scheme == Scheme::Heun && self.medium.mu != 0.0 {
            let d1 = self.field_derivative(&next)?;
            next = fields.clone();
            next.z = fields.z + dz;
            for c in 0..4 {
                for ((x, a), b) in next.omega[c].iter_mut().zip(&d0[c]).zip(&d1[c]) {
                    *x += 0.5 * dz * (a + b);
                }
            }
        }
        Ok(next)
    }
}

fn axpy_fields(fields: &mut FieldSnapshot, a: f64, d: &[Vec<C64>; 4]) {
    for (ch, dc) in fields.omega.iter_mut().zip(d) {
        for (x, y) in ch.iter_mut().zip(dc) {
            *x += a * y;
        }
    }
}

fn record(result: &mut PropagationResult, fields: &FieldSnapshot, grid: &RetardedGrid) {
    result.area_records.push(snapshot_areas(fields, grid));
    for ch in Channel::ALL {
        let (t, amplitude) = peak_position(fields.channel(ch), grid);
        result.peak_tracks[ch.index()].push(PeakSample { z: fields.z, t, amplitude });
    }
    result.energies.push(fields.energy(grid.dt()));
}

/// March `initial` (the fields at the medium entrance) through `grid.n_z`
/// depth steps of size `grid.dz()`.
pub fn propagate(
    initial: &FieldSnapshot,
    medium: &MediumSpec,
    grid: &RetardedGrid,
    cfg: &SolverConfig,
) -> Result<PropagationResult> {
    grid.validate()?;
    medium.validate()?;
    initial.check_shape(grid)?;
    let dz = grid.dz();
    cfg.validate(dz)?;
    if let Some((ch, i)) = initial.first_non_finite() {
        return Err(Error::domain(format!("initial channel {ch} is non-finite at sample {i}")));
    }
    let propagator = Propagator::new(*medium, *grid, cfg.stability_policy)?;
    let stride = cfg.stride(dz);
    let progress_every = (grid.n_z / 10).max(1);

    let mut result = PropagationResult::default();
    let mut fields = initial.clone();
    fields.z = 0.0;
    record(&mut result, &fields, grid);
    result.snapshots.push(fields.clone());

    for k in 1..=grid.n_z {
        let mut next = propagator.step(&fields, dz, cfg.scheme)?;
        next.z = grid.depth(k);
        if let Some((_, i)) = next.first_non_finite() {
            return Err(Error::NonFinite { z: next.z, t: grid.time(i), last_good_z: fields.z });
        }
        fields = next;
        record(&mut result, &fields, grid);
        if k % stride == 0 || k == grid.n_z {
            result.snapshots.push(fields.clone());
        }
        if k % progress_every == 0 {
            let r = result.area_records.last().unwrap();
            log::info!(
                "z = {:.4} ({}/{}) theta_T = {:.5} pi",
                fields.z,
                k,
                grid.n_z,
                r.theta_total / std::f64::consts::PI
            );
        }
    }
    Ok(result)
}

/// Largest elementwise gap between the finite-difference `dH/dZ` built from
/// two snapshots and the commutator form `-(mu/2) [W, <rho>]` with
/// `W = i diag(0, 0, 1, 1)`. `averaged` holds the ensemble-averaged density
/// matrix at each time sample.
pub fn commutator_consistency_check(
    before: &FieldSnapshot,
    after: &FieldSnapshot,
    averaged: &[DensityMatrix4],
    mu: f64,
) -> f64 {
    let dz = after.z - before.z;
    let mut w: Matrix4c = [[ZERO; 4]; 4];
    w[2][2] = I;
    w[3][3] = I;
    let mut worst: f64 = 0.0;
    for (k, rho) in averaged.iter().enumerate() {
        let h0 = build_hamiltonian(before.at(k), 0.0);
        let h1 = build_hamiltonian(after.at(k), 0.0);
        let comm = commutator(&w, &rho.0);
        for i in 0..4 {
            for j in 0..4 {
                let fd = if dz != 0.0 { (h1[i][j] - h0[i][j]) / dz } else { ZERO };
                let rhs = -0.5 * mu * comm[i][j];
                worst = worst.max((fd - rhs).norm());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::LineShape;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn maxwell_rhs_examples() {
        assert_eq!(maxwell_rhs([ZERO; 4], 3.0), [ZERO; 4]);
        let d = maxwell_rhs([c(0.0, 0.1), ZERO, ZERO, ZERO], 2.0);
        assert!((d[0] - c(0.2, 0.0)).norm() < 1e-16);
        // diagonal (e.g. fully inverted) state has no coherences
        let mut rho = DensityMatrix4::zeros();
        rho.0[2][2] = c(1.0, 0.0);
        assert_eq!(maxwell_rhs(rho.coherences(), 1.0), [ZERO; 4]);
    }

    #[test]
    fn snapshot_every_must_cover_a_step() {
        let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: 0.01, stability_policy: StabilityPolicy::Warn };
        assert!(cfg.validate(0.1).is_err());
        assert!(cfg.validate(0.01).is_ok());
    }

    #[test]
    fn zero_input_stays_zero() {
        let grid = RetardedGrid::new(-10.0, 10.0, 256, 1.0, 10).unwrap();
        let medium = MediumSpec {
            mu: 1.0,
            line: LineShape::Gaussian { t2_star: 2.0 },
            n_detuning: 8,
            alpha_sq: 0.75,
            beta_sq: 0.25,
            length: 1.0,
        };
        let cfg = SolverConfig { scheme: Scheme::Heun, snapshot_every: 0.5, stability_policy: StabilityPolicy::Abort };
        let res = propagate(&FieldSnapshot::zeros(0.0, 256), &medium, &grid, &cfg).unwrap();
        assert_eq!(res.area_records.len(), 11);
        assert_eq!(res.snapshots.len(), 3);
        assert!(res.snapshots.windows(2).all(|p| p[0].z < p[1].z));
        for s in &res.snapshots {
            assert!(s.omega.iter().flatten().all(|w| *w == ZERO));
        }
        assert!(res.area_records.iter().all(|r| r.theta_total == 0.0));
        let prop = Propagator::new(medium, grid, StabilityPolicy::Abort).unwrap();
        let rho = prop.averaged_density(&FieldSnapshot::zeros(0.0, 256));
        let seed = medium.seed_state().unwrap();
        for r in &rho {
            for i in 0..4 {
                for j in 0..4 {
                    assert!((r.0[i][j] - seed.0[i][j]).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn commutator_check_zero_fields() {
        let a = FieldSnapshot::zeros(0.0, 16);
        let b = FieldSnapshot::zeros(0.1, 16);
        let rho = vec![crate::medium::make_seed_state(0.75, 0.25).unwrap(); 16];
        assert_eq!(commutator_consistency_check(&a, &b, &rho, 1.0), 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let grid = RetardedGrid::new(-10.0, 10.0, 256, 1.0, 10).unwrap();
        let medium = MediumSpec::sharp_line(1.0, 1.0, 1.0);
        let cfg = SolverConfig { scheme: Scheme::Euler, snapshot_every: 0.1, stability_policy: StabilityPolicy::Warn };
        assert!(propagate(&FieldSnapshot::zeros(0.0, 100), &medium, &grid, &cfg).is_err());
    }
}
