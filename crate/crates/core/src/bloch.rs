//! Atomic response: RWA Hamiltonian, von Neumann evolution in retarded time,
//! and the detuning ensemble used for inhomogeneous averaging.
//!
//! Units have hbar = 1. The Hamiltonian is
//!
//! ```text
//! H = -[[0, B], [B^dagger, Delta * I]],   B = 1/2 [[Omega_a, Omega_b], [Omega_c, Omega_d]]
//! ```
//!
//! so that `rho_13` evolves as `exp(-i Delta t)` in the absence of fields.

use gauss_quad::GaussHermite;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldSnapshot;
use crate::medium::{DensityMatrix4, LineShape, Matrix4c, ZERO};

/// Largest allowed `dt * max(|Omega|, |Delta|)` before the guard trips.
pub const STABILITY_LIMIT: f64 = 0.5;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityPolicy {
    #[default]
    Warn,
    Abort,
}

impl StabilityPolicy {
    pub fn check(self, dt: f64, max_rate: f64) -> Result<()> {
        let value = dt * max_rate;
        if value <= STABILITY_LIMIT {
            return Ok(());
        }
        match self {
            StabilityPolicy::Warn => {
                log::warn!("dt * max rate = {value:.3} exceeds {STABILITY_LIMIT}");
                Ok(())
            }
            StabilityPolicy::Abort => Err(Error::Stability { value, limit: STABILITY_LIMIT }),
        }
    }
}

pub fn build_hamiltonian(fields: [C64; 4], delta: f64) -> Matrix4c {
    let [a, b, c, d] = fields.map(|w| 0.5 * w);
    let mut h = [[ZERO; 4]; 4];
    h[0][2] = -a;
    h[0][3] = -b;
    h[1][2] = -c;
    h[1][3] = -d;
    h[2][0] = -a.conj();
    h[2][1] = -c.conj();
    h[3][0] = -b.conj();
    h[3][1] = -d.conj();
    h[2][2] = C64::new(-delta, 0.0);
    h[3][3] = C64::new(-delta, 0.0);
    h
}

pub fn matmul(x: &Matrix4c, y: &Matrix4c) -> Matrix4c {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let xik = x[i][k];
            for j in 0..4 {
                out[i][j] += xik * y[k][j];
            }
        }
    }
    out
}

pub fn commutator(x: &Matrix4c, y: &Matrix4c) -> Matrix4c {
    let xy = matmul(x, y);
    let yx = matmul(y, x);
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = xy[i][j] - yx[i][j];
        }
    }
    out
}

/// `-i [H, rho]`, dense evaluation.
pub fn von_neumann_rhs(rho: &DensityMatrix4, h: &Matrix4c) -> Matrix4c {
    let mut out = commutator(h, &rho.0);
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= -I;
        }
    }
    out
}

type M2 = [[C64; 2]; 2];

#[inline(always)]
fn mul2(x: &M2, y: &M2) -> M2 {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

#[inline(always)]
fn adj2(x: &M2) -> M2 {
    [[x[0][0].conj(), x[1][0].conj()], [x[0][1].conj(), x[1][1].conj()]]
}

#[inline(always)]
fn coupling_block(fields: [C64; 4]) -> M2 {
    [[0.5 * fields[0], 0.5 * fields[1]], [0.5 * fields[2], 0.5 * fields[3]]]
}

/// Block-structured `-i [H, rho]` for the double-Lambda Hamiltonian.
///
/// With rho = [[P, C], [C^dagger, Q]]:
/// P' = i(B C^dag - C B^dag), C' = i(B Q - P B - Delta C), Q' = i(B^dag C - C^dag B).
#[inline(always)]
fn block_rhs(rho: &Matrix4c, b: &M2, delta: f64) -> Matrix4c {
    let p: M2 = [[rho[0][0], rho[0][1]], [rho[1][0], rho[1][1]]];
    let c: M2 = [[rho[0][2], rho[0][3]], [rho[1][2], rho[1][3]]];
    let q: M2 = [[rho[2][2], rho[2][3]], [rho[3][2], rho[3][3]]];
    let bd = adj2(b);
    let cd = adj2(&c);

    let bcd = mul2(b, &cd);
    let dp = [
        [I * (bcd[0][0] - bcd[0][0].conj()), I * (bcd[0][1] - bcd[1][0].conj())],
        [I * (bcd[1][0] - bcd[0][1].conj()), I * (bcd[1][1] - bcd[1][1].conj())],
    ];
    let bq = mul2(b, &q);
    let pb = mul2(&p, b);
    let mut dc = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            dc[i][j] = I * (bq[i][j] - pb[i][j] - delta * c[i][j]);
        }
    }
    let bdc = mul2(&bd, &c);
    let dq = [
        [I * (bdc[0][0] - bdc[0][0].conj()), I * (bdc[0][1] - bdc[1][0].conj())],
        [I * (bdc[1][0] - bdc[0][1].conj()), I * (bdc[1][1] - bdc[1][1].conj())],
    ];
    [
        [dp[0][0], dp[0][1], dc[0][0], dc[0][1]],
        [dp[1][0], dp[1][1], dc[1][0], dc[1][1]],
        [dc[0][0].conj(), dc[1][0].conj(), dq[0][0], dq[0][1]],
        [dc[0][1].conj(), dc[1][1].conj(), dq[1][0], dq[1][1]],
    ]
}

#[inline(always)]
fn axpy(y: &Matrix4c, a: f64, x: &Matrix4c) -> Matrix4c {
    let mut out = *y;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += a * x[i][j];
        }
    }
    out
}

/// One classical RK4 step given the field at the start, midpoint and end.
pub fn rk4_step(
    rho: &mut DensityMatrix4,
    f0: [C64; 4],
    fmid: [C64; 4],
    f1: [C64; 4],
    delta: f64,
    dt: f64,
) {
    let (b0, bm, b1) = (coupling_block(f0), coupling_block(fmid), coupling_block(f1));
    let y = rho.0;
    let k1 = block_rhs(&y, &b0, delta);
    let k2 = block_rhs(&axpy(&y, 0.5 * dt, &k1), &bm, delta);
    let k3 = block_rhs(&axpy(&y, 0.5 * dt, &k2), &bm, delta);
    let k4 = block_rhs(&axpy(&y, dt, &k3), &b1, delta);
    let h6 = dt / 6.0;
    for i in 0..4 {
        for j in 0..4 {
            rho.0[i][j] += h6 * (k1[i][j] + 2.0 * (k2[i][j] + k3[i][j]) + k4[i][j]);
        }
    }
    rho.symmetrize();
}

/// Field at the midpoint of step `k -> k+1` from four-point Lagrange
/// interpolation (one-sided at the ends, linear below four samples).
#[inline]
pub(crate) fn midpoint_field(fields: &FieldSnapshot, k: usize) -> [C64; 4] {
    let n = fields.len();
    let w: [f64; 4];
    let start;
    if n < 4 {
        let (a, b) = (fields.at(k), fields.at(k + 1));
        return [0, 1, 2, 3].map(|c| 0.5 * (a[c] + b[c]));
    } else if k == 0 {
        start = 0;
        w = [5.0 / 16.0, 15.0 / 16.0, -5.0 / 16.0, 1.0 / 16.0];
    } else if k + 2 >= n {
        start = n - 4;
        w = [1.0 / 16.0, -5.0 / 16.0, 15.0 / 16.0, 5.0 / 16.0];
    } else {
        start = k - 1;
        w = [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0];
    }
    let mut out = [ZERO; 4];
    for (c, o) in out.iter_mut().enumerate() {
        let ch = &fields.omega[c];
        *o = w[0] * ch[start] + w[1] * ch[start + 1] + w[2] * ch[start + 2] + w[3] * ch[start + 3];
    }
    out
}

/// Largest |Omega| over all channels and samples.
pub fn max_rabi(fields: &FieldSnapshot) -> f64 {
    fields.omega.iter().flatten().map(|w| w.norm()).fold(0.0, f64::max)
}

/// Integrate a single detuning class over the whole time axis, starting
/// from `seed` at the first sample; `visit` sees the state at every sample.
pub fn integrate_node_with<F>(seed: &DensityMatrix4, delta: f64, fields: &FieldSnapshot, dt: f64, mut visit: F) -> DensityMatrix4
where
    F: FnMut(usize, &DensityMatrix4),
{
    let n = fields.len();
    let mut rho = *seed;
    visit(0, &rho);
    for k in 0..n.saturating_sub(1) {
        let fm = midpoint_field(fields, k);
        rk4_step(&mut rho, fields.at(k), fm, fields.at(k + 1), delta, dt);
        visit(k + 1, &rho);
    }
    rho
}

/// Coherences (rho_13, rho_14, rho_23, rho_24) at every sample for one
/// detuning class, plus its final state.
pub fn integrate_node(
    seed: &DensityMatrix4,
    delta: f64,
    fields: &FieldSnapshot,
    dt: f64,
) -> ([Vec<C64>; 4], DensityMatrix4) {
    let mut out: [Vec<C64>; 4] = std::array::from_fn(|_| Vec::with_capacity(fields.len()));
    let last = integrate_node_with(seed, delta, fields, dt, |_, rho| {
        for (o, c) in out.iter_mut().zip(rho.coherences()) {
            o.push(c);
        }
    });
    (out, last)
}

/// Detuning nodes and probability weights for a line shape.
///
/// The Gaussian distribution `F(Delta) = T2*/sqrt(2 pi) exp(-(Delta T2*)^2 / 2)` is
/// sampled with Gauss-Hermite nodes in `x = Delta T2* / sqrt(2)`.
pub fn detuning_rule(line: LineShape, n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    line.validate()?;
    if n_nodes == 0 {
        return Err(Error::domain("need at least one detuning node"));
    }
    match line {
        LineShape::SharpLine => Ok((vec![0.0], vec![1.0])),
        LineShape::Gaussian { .. } if n_nodes == 1 => Ok((vec![0.0], vec![1.0])),
        LineShape::Gaussian { t2_star } => {
            let rule = GaussHermite::new(n_nodes)
                .map_err(|e| Error::domain(format!("Gauss-Hermite rule: {e}")))?;
            let mut pairs: Vec<(f64, f64)> = rule.into_node_weight_pairs();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let norm = std::f64::consts::PI.sqrt();
            let scale = std::f64::consts::SQRT_2 / t2_star;
            Ok(pairs.into_iter().map(|(x, w)| (x * scale, w / norm)).unzip())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetuningEnsemble {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub states: Vec<DensityMatrix4>,
}

impl DetuningEnsemble {
    pub fn new(line: LineShape, n_nodes: usize, seed: DensityMatrix4) -> Result<Self> {
        let (nodes, weights) = detuning_rule(line, n_nodes)?;
        let states = vec![seed; nodes.len()];
        Ok(Self { nodes, weights, states })
    }

    pub fn max_detuning(&self) -> f64 {
        self.nodes.iter().map(|d| d.abs()).fold(0.0, f64::max)
    }

    /// Advance every node by one RK4 step, interpolating the field linearly
    /// to the half step.
    pub fn step(
        &mut self,
        f0: [C64; 4],
        f1: [C64; 4],
        dt: f64,
        policy: StabilityPolicy,
    ) -> Result<()> {
        let fmid = [0, 1, 2, 3].map(|c| 0.5 * (f0[c] + f1[c]));
        self.step_with_midpoint(f0, fmid, f1, dt, policy)
    }

    pub fn step_with_midpoint(
        &mut self,
        f0: [C64; 4],
        fmid: [C64; 4],
        f1: [C64; 4],
        dt: f64,
        policy: StabilityPolicy,
    ) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!("dt must be > 0, got {dt}")));
        }
        let max_field = f0.iter().chain(&f1).map(|w| w.norm()).fold(0.0, f64::max);
        policy.check(dt, max_field.max(self.max_detuning()))?;
        self.states.par_iter_mut().zip(self.nodes.par_iter()).for_each(|(rho, &delta)| {
            rk4_step(rho, f0, fmid, f1, delta, dt);
        });
        Ok(())
    }

    /// Weighted average of (rho_13, rho_14, rho_23, rho_24), summed in node order.
    pub fn averaged_coherences(&self) -> [C64; 4] {
        let mut acc = [ZERO; 4];
        for (w, rho) in self.weights.iter().zip(&self.states) {
            for (a, c) in acc.iter_mut().zip(rho.coherences()) {
                *a += *w * c;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::make_seed_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_fields(rng: &mut ChaCha8Rng) -> [C64; 4] {
        std::array::from_fn(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
    }

    fn random_state(rng: &mut ChaCha8Rng) -> DensityMatrix4 {
        // rho = A A^dagger / tr
        let a: Matrix4c = std::array::from_fn(|_| {
            std::array::from_fn(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        });
        let mut ad = [[ZERO; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                ad[i][j] = a[j][i].conj();
            }
        }
        let mut m = matmul(&a, &ad);
        let tr: C64 = (0..4).map(|i| m[i][i]).sum();
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v /= tr;
            }
        }
        DensityMatrix4(m)
    }

    #[test]
    fn hamiltonian_examples() {
        let h = build_hamiltonian([ZERO; 4], 0.0);
        assert_eq!(h, [[ZERO; 4]; 4]);
        let h = build_hamiltonian([c(2.0, 0.0), ZERO, ZERO, ZERO], 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i, j) == (0, 2) || (i, j) == (2, 0) { c(-1.0, 0.0) } else { ZERO };
                assert_eq!(h[i][j], expected);
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_with_forbidden_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let h = build_hamiltonian(random_fields(&mut rng), rng.random_range(-3.0..3.0));
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(h[i][j], h[j][i].conj());
                }
            }
            assert_eq!(h[0][1], ZERO);
            assert_eq!(h[2][3], ZERO);
        }
    }

    #[test]
    fn rhs_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_state(&mut rng);
        assert_eq!(von_neumann_rhs(&rho, &[[ZERO; 4]; 4]), [[ZERO; 4]; 4]);
        let mut quarter = DensityMatrix4::zeros();
        for i in 0..4 {
            quarter.0[i][i] = c(0.25, 0.0);
        }
        let h = build_hamiltonian(random_fields(&mut rng), 1.3);
        let r = von_neumann_rhs(&quarter, &h);
        assert!(r.iter().flatten().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn block_rhs_matches_dense_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let fields = random_fields(&mut rng);
            let delta = rng.random_range(-4.0..4.0);
            let rho = random_state(&mut rng);
            let dense = von_neumann_rhs(&rho, &build_hamiltonian(fields, delta));
            let fast = block_rhs(&rho.0, &coupling_block(fields), delta);
            let trace: C64 = (0..4).map(|i| dense[i][i]).sum();
            assert!(trace.norm() < 1e-14);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((dense[i][j] - fast[i][j]).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn detuning_rotation_sign() {
        // rho_13' = -i Delta rho_13 for zero fields, from -i[H, rho] with H_33 = -Delta
        let delta = 0.7;
        let mut rho = make_seed_state(0.5, 0.5).unwrap();
        let coh = c(0.1, 0.05);
        rho.0[0][2] = coh;
        rho.0[2][0] = coh.conj();
        let dense = von_neumann_rhs(&rho, &build_hamiltonian([ZERO; 4], delta));
        assert!((dense[0][2] - (-I * delta * coh)).norm() < 1e-16);

        let mut ens = DetuningEnsemble {
            nodes: vec![delta],
            weights: vec![1.0],
            states: vec![rho],
        };
        let dt = 0.01;
        for _ in 0..1000 {
            ens.step([ZERO; 4], [ZERO; 4], dt, StabilityPolicy::Abort).unwrap();
        }
        let got = ens.states[0].get(0, 2);
        let expected = coh * (-I * delta * 10.0).exp();
        assert!((got.norm() - coh.norm()).abs() < 1e-12);
        assert!((got - expected).norm() < 1e-10);
    }

    #[test]
    fn zero_fields_leave_ensemble_unchanged() {
        let seed = make_seed_state(0.75, 0.25).unwrap();
        let mut ens = DetuningEnsemble::new(LineShape::SharpLine, 1, seed).unwrap();
        for _ in 0..100 {
            ens.step([ZERO; 4], [ZERO; 4], 0.05, StabilityPolicy::Abort).unwrap();
        }
        assert_eq!(ens.states[0], seed);
    }

    #[test]
    fn stability_guard() {
        let seed = make_seed_state(1.0, 0.0).unwrap();
        let mut ens = DetuningEnsemble::new(LineShape::SharpLine, 1, seed).unwrap();
        let big = [c(20.0, 0.0), ZERO, ZERO, ZERO];
        assert!(matches!(
            ens.step(big, big, 0.1, StabilityPolicy::Abort),
            Err(Error::Stability { .. })
        ));
        assert!(ens.step(big, big, 0.1, StabilityPolicy::Warn).is_ok());
        assert!(ens.step(big, big, -0.1, StabilityPolicy::Warn).is_err());
    }

    #[test]
    fn constant_field_rabi_flopping() {
        // oracle: rho_33 = sin^2(Omega t / 2) for resonant two-level flopping
        let omega = 1.3;
        let seed = make_seed_state(1.0, 0.0).unwrap();
        let mut ens = DetuningEnsemble::new(LineShape::SharpLine, 1, seed).unwrap();
        let f = [c(omega, 0.0), ZERO, ZERO, ZERO];
        let n = 4000;
        let dt = 5.0 / n as f64;
        for _ in 0..n {
            ens.step(f, f, dt, StabilityPolicy::Abort).unwrap();
        }
        let expected = (omega * 5.0 / 2.0).sin().powi(2);
        assert!((ens.states[0].get(2, 2).re - expected).abs() < 1e-10);
    }

    #[test]
    fn averaged_coherence_examples() {
        let seed = make_seed_state(0.75, 0.25).unwrap();
        let ens = DetuningEnsemble::new(LineShape::Gaussian { t2_star: 2.0 }, 16, seed).unwrap();
        assert_eq!(ens.averaged_coherences(), [ZERO; 4]);

        let mut single = DetuningEnsemble::new(LineShape::SharpLine, 1, seed).unwrap();
        single.states[0].0[1][3] = c(0.2, -0.1);
        assert_eq!(single.averaged_coherences()[3], c(0.2, -0.1));

        let mut pair = DetuningEnsemble {
            nodes: vec![-1.0, 1.0],
            weights: vec![0.5, 0.5],
            states: vec![seed, seed],
        };
        pair.states[0].0[0][2] = c(0.0, 0.3);
        pair.states[1].0[0][2] = c(0.0, -0.3);
        assert_eq!(pair.averaged_coherences()[0], ZERO);
    }

    #[test]
    fn gauss_hermite_moments() {
        for t2 in [0.5, 1.0, 5.0] {
            let (nodes, weights) = detuning_rule(LineShape::Gaussian { t2_star: t2 }, 64).unwrap();
            let m0: f64 = weights.iter().sum();
            let m2: f64 = nodes.iter().zip(&weights).map(|(d, w)| w * d * d).sum();
            assert!((m0 - 1.0).abs() < 1e-12, "{m0}");
            assert!((m2 * t2 * t2 - 1.0).abs() < 1e-10, "{m2}");
            assert!(weights.iter().all(|w| *w >= 0.0));
            assert!(nodes.windows(2).all(|p| p[0] < p[1]));
        }
        let (n, w) = detuning_rule(LineShape::SharpLine, 1).unwrap();
        assert_eq!((n, w), (vec![0.0], vec![1.0]));
    }
}
