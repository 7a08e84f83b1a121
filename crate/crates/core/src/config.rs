//! JSON run configuration shared by the `analytic` and `simulate` commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{analytic_fields, kappa_average, SolitonParams};
use crate::bloch::StabilityPolicy;
use crate::error::{Error, Result};
use crate::grid::{FieldSnapshot, RetardedGrid};
use crate::medium::{LineShape, MediumSpec};
use crate::pulse::{generate_pulse, PulseSpec};
use crate::solver::{Scheme, SolverConfig};

/// Detuning nodes used for a broadened line when the config does not say.
pub const DEFAULT_BROADENED_NODES: usize = 64;

/// Snapshots per run when `snapshot_every` is omitted (plus the entrance).
pub const DEFAULT_FRAMES: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Low,
    #[default]
    Default,
    High,
}

impl Resolution {
    /// Multiplier applied to both `n_t` and `n_z`.
    pub fn factor(self) -> f64 {
        match self {
            Resolution::Low => 0.5,
            Resolution::Default => 1.0,
            Resolution::High => 2.0,
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Resolution::Low),
            "default" => Ok(Resolution::Default),
            "high" => Ok(Resolution::High),
            other => Err(Error::Schema(format!("unknown resolution \"{other}\""))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub n_z: usize,
}

fn sharp() -> LineShape {
    LineShape::SharpLine
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub mu: f64,
    #[serde(default = "sharp")]
    pub t2_star: LineShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_detuning: Option<usize>,
    pub alpha_sq: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSection {
    pub tau: f64,
    pub u: f64,
    /// Absorption parameter; computed from the medium when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Solution depth that coincides with the medium entrance.
    #[serde(default)]
    pub z_entry: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub stability_policy: StabilityPolicy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Depths for `analytic` snapshots, in solution coordinates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub z_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub medium: MediumSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pulses: Vec<PulseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soliton: Option<SolitonSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parse and validate. Structural problems are `Error::Schema`,
    /// out-of-range values `Error::Domain`.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.retarded_grid()?;
        self.medium_spec()?.validate()?;
        for p in &self.pulses {
            p.validate()?;
        }
        if let Some(every) = self.solver.snapshot_every {
            if !(every.is_finite() && every > 0.0) {
                return Err(Error::domain(format!("snapshot_every must be > 0, got {every}")));
            }
        }
        if self.output.z_values.iter().any(|z| !z.is_finite()) {
            return Err(Error::domain("z_values must be finite"));
        }
        if self.soliton.is_some() {
            self.soliton_params()?;
        }
        Ok(())
    }

    pub fn with_resolution(mut self, res: Resolution) -> Self {
        let f = res.factor();
        self.grid.n_t = ((self.grid.n_t as f64 * f).round() as usize).max(2);
        self.grid.n_z = ((self.grid.n_z as f64 * f).round() as usize).max(1);
        self
    }

    pub fn retarded_grid(&self) -> Result<RetardedGrid> {
        let g = &self.grid;
        RetardedGrid::new(g.t_min, g.t_max, g.n_t, self.medium.length, g.n_z)
    }

    pub fn medium_spec(&self) -> Result<MediumSpec> {
        let m = &self.medium;
        let n_detuning = m.n_detuning.unwrap_or(match m.t2_star {
            LineShape::SharpLine => 1,
            LineShape::Gaussian { .. } => DEFAULT_BROADENED_NODES,
        });
        let spec = MediumSpec {
            mu: m.mu,
            line: m.t2_star,
            n_detuning,
            alpha_sq: m.alpha_sq,
            beta_sq: 1.0 - m.alpha_sq,
            length: m.length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let grid = self.retarded_grid()?;
        let every = self.solver.snapshot_every.unwrap_or(grid.z_max / DEFAULT_FRAMES as f64);
        let cfg = SolverConfig {
            scheme: self.solver.scheme,
            snapshot_every: every.max(grid.dz()),
            stability_policy: self.solver.stability_policy,
        };
        cfg.validate(grid.dz())?;
        Ok(cfg)
    }

    /// Soliton parameters and entrance depth, if the config has a soliton section.
    pub fn soliton_params(&self) -> Result<(SolitonParams, f64)> {
        let s = self
            .soliton
            .as_ref()
            .ok_or_else(|| Error::Schema("missing field `soliton`".into()))?;
        let m = self.medium_spec()?;
        let kappa = match s.kappa {
            Some(k) => k,
            None => kappa_average(m.mu, s.tau, m.line, m.n_detuning)?,
        };
        let p = SolitonParams::new(s.tau, s.u, m.alpha_sq, kappa)?;
        if !s.z_entry.is_finite() {
            return Err(Error::domain("z_entry must be finite"));
        }
        Ok((p, s.z_entry))
    }

    /// Entrance fields: the listed pulses plus, if present, the soliton at `z_entry`.
    pub fn initial_fields(&self) -> Result<FieldSnapshot> {
        let grid = self.retarded_grid()?;
        let mut fields = FieldSnapshot::zeros(0.0, grid.n_t);
        for spec in &self.pulses {
            let env = generate_pulse(spec, &grid)?;
            for (o, e) in fields.channel_mut(spec.channel).iter_mut().zip(env) {
                *o += e;
            }
        }
        if self.soliton.is_some() {
            let (p, z_entry) = self.soliton_params()?;
            let sol = analytic_fields(z_entry, &grid, &p);
            for (dst, src) in fields.omega.iter_mut().zip(sol.omega.iter()) {
                for (o, e) in dst.iter_mut().zip(src) {
                    *o += e;
                }
            }
        }
        Ok(fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "grid": {"t_min": -40, "t_max": 40, "n_t": 512, "n_z": 100},
        "medium": {"mu": 1.0, "t2_star": 5.0, "n_detuning": 8, "alpha_sq": 0.75, "length": 2.0},
        "pulses": [{"shape": "square_gaussian", "area": 4.398, "width": 1.5, "center": -25, "channel": "a"}],
        "soliton": {"tau": 1.0, "u": 0.7853981633974483, "kappa": 0.5, "z_entry": -16.0},
        "solver": {"scheme": "euler", "snapshot_every": 0.5, "stability_policy": "abort"},
        "output": {"z_values": [-8.0, 0.1, 8.0]}
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = RunConfig::from_json(FULL).unwrap();
        let b = RunConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"t_min": -20, "t_max": 20, "n_t": 64, "n_z": 10},
                "medium": {"mu": 1, "alpha_sq": 1, "length": 1}}"#,
        )
        .unwrap();
        let m = cfg.medium_spec().unwrap();
        assert_eq!(m.line, LineShape::SharpLine);
        assert_eq!(m.n_detuning, 1);
        assert_eq!(m.beta_sq, 0.0);
        let s = cfg.solver_config().unwrap();
        assert_eq!(s.scheme, Scheme::Heun);
        assert!((s.snapshot_every - 0.2).abs() < 1e-15);
        assert!(cfg.initial_fields().unwrap().omega.iter().all(|c| c.iter().all(|v| *v == crate::C64::new(0.0, 0.0))));
    }

    #[test]
    fn broadened_default_nodes() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"t_min": -20, "t_max": 20, "n_t": 64, "n_z": 10},
                "medium": {"mu": 1, "t2_star": 2.0, "alpha_sq": 0.5, "length": 1}}"#,
        )
        .unwrap();
        assert_eq!(cfg.medium_spec().unwrap().n_detuning, DEFAULT_BROADENED_NODES);
    }

    #[test]
    fn missing_key_is_schema_error_naming_it() {
        let text = FULL.replace("\"tau\": 1.0, ", "");
        match RunConfig::from_json(&text) {
            Err(Error::Schema(msg)) => assert!(msg.contains("tau"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_schema_error() {
        let text = FULL.replace("\"mu\": 1.0", "\"mu\": 1.0, \"nu\": 2");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn out_of_range_is_domain_error() {
        for (from, to) in [
            ("\"alpha_sq\": 0.75", "\"alpha_sq\": 1.5"),
            ("\"u\": 0.7853981633974483", "\"u\": 2.0"),
            ("\"mu\": 1.0", "\"mu\": -1.0"),
            ("\"t2_star\": 5.0", "\"t2_star\": -5.0"),
            ("\"n_t\": 512", "\"n_t\": 1"),
        ] {
            let text = FULL.replace(from, to);
            assert!(matches!(RunConfig::from_json(&text), Err(Error::Domain(_))), "{to}");
        }
    }

    #[test]
    fn resolution_scales_both_axes() {
        let cfg = RunConfig::from_json(FULL).unwrap();
        let hi = cfg.clone().with_resolution(Resolution::High);
        assert_eq!((hi.grid.n_t, hi.grid.n_z), (1024, 200));
        let lo = cfg.with_resolution(Resolution::Low);
        assert_eq!((lo.grid.n_t, lo.grid.n_z), (256, 50));
        assert_eq!("high".parse::<Resolution>().unwrap(), Resolution::High);
        assert!("ultra".parse::<Resolution>().is_err());
    }

    #[test]
    fn kappa_defaults_to_medium_average() {
        let text = FULL.replace("\"kappa\": 0.5, ", "").replace("\"t2_star\": 5.0, \"n_detuning\": 8, ", "");
        let cfg = RunConfig::from_json(&text).unwrap();
        let (p, z_entry) = cfg.soliton_params().unwrap();
        assert_eq!(p.kappa, 0.5);
        assert_eq!(z_entry, -16.0);
    }
}
