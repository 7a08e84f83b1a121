//! Resonant medium description and the atomic density matrix.

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `alpha_sq + beta_sq = 1`.
pub const POPULATION_TOL: f64 = 1e-12;

pub type Matrix4c = [[C64; 4]; 4];

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Inhomogeneous line shape. The sharp-line limit is kept as its own variant
/// so the single resonant node is exact rather than a large-`T2*` approximation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LineShape {
    SharpLine,
    Gaussian { t2_star: f64 },
}

impl LineShape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LineShape::SharpLine => Ok(()),
            LineShape::Gaussian { t2_star } if t2_star.is_finite() && t2_star > 0.0 => Ok(()),
            LineShape::Gaussian { t2_star } => {
                Err(Error::domain(format!("t2_star must be > 0, got {t2_star}")))
            }
        }
    }
}

// JSON form: the string "sharp" or a positive number.
impl Serialize for LineShape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            LineShape::SharpLine => s.serialize_str("sharp"),
            LineShape::Gaussian { t2_star } => s.serialize_f64(t2_star),
        }
    }
}

impl<'de> Deserialize<'de> for LineShape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t2_star) => Ok(LineShape::Gaussian { t2_star }),
            Raw::Text(s) if s == "sharp" => Ok(LineShape::SharpLine),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "t2_star must be a number or \"sharp\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediumSpec {
    /// Coupling shared by all four transitions.
    pub mu: f64,
    pub line: LineShape,
    pub n_detuning: usize,
    pub alpha_sq: f64,
    pub beta_sq: f64,
    pub length: f64,
}

impl MediumSpec {
    pub fn sharp_line(mu: f64, alpha_sq: f64, length: f64) -> Self {
        Self {
            mu,
            line: LineShape::SharpLine,
            n_detuning: 1,
            alpha_sq,
            beta_sq: 1.0 - alpha_sq,
            length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // mu = 0 is the free-streaming limit, allowed for diagnostics
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::domain(format!("mu must be >= 0, got {}", self.mu)));
        }
        self.line.validate()?;
        match self.line {
            LineShape::SharpLine if self.n_detuning != 1 => {
                return Err(Error::domain("sharp-line medium needs exactly one detuning node"))
            }
            _ if self.n_detuning == 0 => return Err(Error::domain("n_detuning must be >= 1")),
            _ => {}
        }
        check_populations(self.alpha_sq, self.beta_sq)?;
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::domain(format!("medium length must be > 0, got {}", self.length)));
        }
        Ok(())
    }

    pub fn seed_state(&self) -> Result<DensityMatrix4> {
        make_seed_state(self.alpha_sq, self.beta_sq)
    }
}

pub(crate) fn check_populations(alpha_sq: f64, beta_sq: f64) -> Result<()> {
    let in_unit = |p: f64| (0.0..=1.0).contains(&p);
    if !in_unit(alpha_sq) || !in_unit(beta_sq) {
        return Err(Error::domain(format!(
            "populations must lie in [0, 1], got ({alpha_sq}, {beta_sq})"
        )));
    }
    if (alpha_sq + beta_sq - 1.0).abs() > POPULATION_TOL {
        return Err(Error::domain(format!(
            "populations must sum to 1, got {alpha_sq} + {beta_sq}"
        )));
    }
    Ok(())
}

/// 4x4 density matrix in the |1>, |2>, |3>, |4> basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix4(pub Matrix4c);

impl DensityMatrix4 {
    pub fn zeros() -> Self {
        Self([[ZERO; 4]; 4])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn populations(&self) -> [f64; 4] {
        [self.0[0][0].re, self.0[1][1].re, self.0[2][2].re, self.0[3][3].re]
    }

    /// Coherences (rho_13, rho_14, rho_23, rho_24), matching channels a, b, c, d.
    pub fn coherences(&self) -> [C64; 4] {
        [self.0[0][2], self.0[0][3], self.0[1][2], self.0[1][3]]
    }

    pub fn adjoint(&self) -> Self {
        let mut out = [[ZERO; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[j][i].conj();
            }
        }
        Self(out)
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        worst
    }

    /// rho <- (rho + rho^dagger) / 2
    pub fn symmetrize(&mut self) {
        for i in 0..4 {
            self.0[i][i] = C64::new(self.0[i][i].re, 0.0);
            for j in (i + 1)..4 {
                let upper = 0.5 * (self.0[i][j] + self.0[j][i].conj());
                self.0[i][j] = upper;
                self.0[j][i] = upper.conj();
            }
        }
    }

    pub fn purity(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                // tr(rho^2) = sum_ij rho_ij rho_ji
                s += (self.0[i][j] * self.0[j][i]).re;
            }
        }
        s
    }

    pub fn to_matrix(&self) -> Matrix4<C64> {
        Matrix4::from_fn(|i, j| self.0[i][j])
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Zero-field stationary state: populations `alpha_sq`, `beta_sq` in the two
/// ground levels, no coherences.
pub fn make_seed_state(alpha_sq: f64, beta_sq: f64) -> Result<DensityMatrix4> {
    check_populations(alpha_sq, beta_sq)?;
    let mut rho = DensityMatrix4::zeros();
    rho.0[0][0] = C64::new(alpha_sq, 0.0);
    rho.0[1][1] = C64::new(beta_sq, 0.0);
    Ok(rho)
}
