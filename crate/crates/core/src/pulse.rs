//! Input pulse synthesis for the medium entrance.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::trapezoid;
use crate::error::{Error, Result};
use crate::grid::{Channel, RetardedGrid};

/// Gamma(5/4), for the area of exp(-x^4).
const GAMMA_5_4: f64 = 0.906_402_477_055_477;

/// Minimum fraction of the analytic area that must fall inside the grid.
pub const MIN_CAPTURED_FRACTION: f64 = 0.999;

const PROFILE_FLOOR: f64 = 1e-250;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Sech,
    Gaussian,
    SquareGaussian,
}

impl PulseShape {
    fn profile(self, x: f64) -> f64 {
        let v = match self {
            PulseShape::Sech => 1.0 / x.cosh(),
            PulseShape::Gaussian => (-x * x).exp(),
            PulseShape::SquareGaussian => (-x.powi(4)).exp(),
        };
        // flush the far tails so that scaling by the amplitude stays exact
        if v < PROFILE_FLOOR {
            0.0
        } else {
            v
        }
    }

    /// Integral over the real line of the unit-amplitude, unit-width profile.
    pub fn unit_area(self) -> f64 {
        match self {
            PulseShape::Sech => std::f64::consts::PI,
            PulseShape::Gaussian => std::f64::consts::PI.sqrt(),
            PulseShape::SquareGaussian => 2.0 * GAMMA_5_4,
        }
    }
}

impl std::str::FromStr for PulseShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sech" => Ok(PulseShape::Sech),
            "gaussian" => Ok(PulseShape::Gaussian),
            "square_gaussian" => Ok(PulseShape::SquareGaussian),
            other => Err(Error::Schema(format!("unsupported pulse shape \"{other}\""))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub shape: PulseShape,
    /// Target input area in radians.
    pub area: f64,
    pub width: f64,
    pub center: f64,
    pub channel: Channel,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::domain(format!("pulse width must be > 0, got {}", self.width)));
        }
        if !(self.area.is_finite() && self.area >= 0.0) {
            return Err(Error::domain(format!("pulse area must be >= 0, got {}", self.area)));
        }
        if !self.center.is_finite() {
            return Err(Error::domain("pulse center must be finite"));
        }
        Ok(())
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.area / (self.width * self.shape.unit_area())
    }
}

/// Real envelope whose discrete trapezoid area on `grid` equals `spec.area`.
pub fn generate_pulse(spec: &PulseSpec, grid: &RetardedGrid) -> Result<Vec<C64>> {
    spec.validate()?;
    grid.validate()?;
    let unit: Vec<f64> = grid
        .times()
        .map(|t| spec.shape.profile((t - spec.center) / spec.width))
        .collect();
    let discrete = trapezoid(unit.iter().copied(), grid.dt());
    let analytic = spec.shape.unit_area() * spec.width;
    if discrete < MIN_CAPTURED_FRACTION * analytic {
        return Err(Error::domain(format!(
            "{:?} pulse on channel {} is clipped by the grid: {:.4}% of its area inside [{}, {}]",
            spec.shape,
            spec.channel,
            100.0 * discrete / analytic,
            grid.t_min,
            grid.t_max
        )));
    }
    let margin = 4.0 * spec.width;
    if spec.center - margin < grid.t_min || spec.center + margin > grid.t_max {
        log::warn!(
            "pulse on channel {} peaks within 4 widths of the grid edge",
            spec.channel
        );
    }
    if spec.area == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); grid.n_t]);
    }
    let amplitude = spec.area / discrete;
    Ok(unit.into_iter().map(|u| C64::new(amplitude * u, 0.0)).collect())
}
