//! Retarded-frame sampling grid and field snapshots.
//!
//! Time is retarded time `T = t - x/c` in units of the reference time, and
//! `Z = x/c` is the propagation depth. The grid is uniform in both.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    A,
    B,
    C,
    D,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::A, Channel::B, Channel::C, Channel::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::A => "a",
            Channel::B => "b",
            Channel::C => "c",
            Channel::D => "d",
        }
    }

    /// Input pair (a, b) couples to ground level 1; output pair (c, d) to level 2.
    pub fn is_input(self) -> bool {
        matches!(self, Channel::A | Channel::B)
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetardedGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub z_max: f64,
    pub n_z: usize,
}

impl RetardedGrid {
    pub fn new(t_min: f64, t_max: f64, n_t: usize, z_max: f64, n_z: usize) -> Result<Self> {
        let grid = Self { t_min, t_max, n_t, z_max, n_z };
        grid.validate()?;
        Ok(grid)
    }

    /// Time-only grid for closed-form evaluation; the depth axis is a single unit step.
    pub fn time_only(t_min: f64, t_max: f64, n_t: usize) -> Result<Self> {
        Self::new(t_min, t_max, n_t, 1.0, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 {
            return Err(Error::domain(format!("n_t must be >= 2, got {}", self.n_t)));
        }
        if self.n_z < 1 {
            return Err(Error::domain("n_z must be >= 1"));
        }
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_max > self.t_min) {
            return Err(Error::domain(format!(
                "need finite t_max > t_min, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(Error::domain(format!("z_max must be > 0, got {}", self.z_max)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_t - 1) as f64
    }

    pub fn dz(&self) -> f64 {
        self.z_max / self.n_z as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.dt()
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let dt = self.dt();
        (0..self.n_t).map(move |i| self.t_min + i as f64 * dt)
    }

    pub fn depth(&self, k: usize) -> f64 {
        k as f64 * self.dz()
    }

    /// Same depth axis, time axis shifted so that it is centred on `center`.
    pub fn recentred(&self, center: f64) -> Self {
        let half = 0.5 * (self.t_max - self.t_min);
        Self { t_min: center - half, t_max: center + half, ..*self }
    }
}

/// The four complex Rabi-frequency envelopes at one depth.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub z: f64,
    pub omega: [Vec<C64>; 4],
}

impl FieldSnapshot {
    pub fn zeros(z: f64, n_t: usize) -> Self {
        let zero = vec![C64::new(0.0, 0.0); n_t];
        Self { z, omega: [zero.clone(), zero.clone(), zero.clone(), zero] }
    }

    pub fn len(&self) -> usize {
        self.omega[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, ch: Channel) -> &[C64] {
        &self.omega[ch.index()]
    }

    pub fn channel_mut(&mut self, ch: Channel) -> &mut Vec<C64> {
        &mut self.omega[ch.index()]
    }

    /// The four field values at sample `i`, in channel order a, b, c, d.
    pub fn at(&self, i: usize) -> [C64; 4] {
        [self.omega[0][i], self.omega[1][i], self.omega[2][i], self.omega[3][i]]
    }

    pub fn check_shape(&self, grid: &RetardedGrid) -> Result<()> {
        for ch in Channel::ALL {
            if self.channel(ch).len() != grid.n_t {
                return Err(Error::domain(format!(
                    "channel {ch} has {} samples, grid has {}",
                    self.channel(ch).len(),
                    grid.n_t
                )));
            }
        }
        Ok(())
    }

    /// First non-finite sample as (channel, index).
    pub fn first_non_finite(&self) -> Option<(Channel, usize)> {
        for ch in Channel::ALL {
            if let Some(i) = self.channel(ch).iter().position(|w| !(w.re.is_finite() && w.im.is_finite())) {
                return Some((ch, i));
            }
        }
        None
    }

    /// Sum over channels of the trapezoid integral of |Omega|^2.
    pub fn energy(&self, dt: f64) -> f64 {
        self.omega
            .iter()
            .map(|w| crate::diagnostics::trapezoid(w.iter().map(|x| x.norm_sqr()), dt))
            .sum()
    }
}
