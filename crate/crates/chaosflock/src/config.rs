//! Run configuration: one JSON document per experiment, fully defaulted,
//! unknown keys rejected, echoed back next to the outputs so every run can be
//! replayed bit-for-bit.

use crate::chaos::InitialLaw;
use crate::geometry::{MollifiedKernel, SensitivityRegion, ThetaFamily};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Meanfield,
    Chaos,
    Verify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub meanfield: MeanfieldBlock,
    #[serde(default)]
    pub chaos: ChaosBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_seed() -> u64 {
    42
}

impl RunConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: kind,
            seed: default_seed(),
            out_dir: None,
            threads: None,
            region: RegionConfig::default(),
            sim: SimBlock::default(),
            meanfield: MeanfieldBlock::default(),
            chaos: ChaosBlock::default(),
            verify: VerifyBlock::default(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.region.region.validate()?;
        if !(self.region.eta > 0.0 && self.region.eta < 0.5) {
            return Err(format!("eta must lie in (0, 1/2), got {}", self.region.eta));
        }
        if !(self.region.eps > 0.0 && self.region.eps < 0.5) {
            return Err(format!("eps must lie in (0, 1/2), got {}", self.region.eps));
        }
        if self.sim.dt <= 0.0 || self.sim.t_end < 0.0 || self.sim.sigma < 0.0 {
            return Err("sim block needs dt > 0, t_end >= 0, sigma >= 0".into());
        }
        if self.sim.v_m <= 0.0 {
            return Err("v_m must be positive".into());
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<MollifiedKernel, String> {
        MollifiedKernel::new(self.region.region, self.region.eta, self.region.eps)
            .map(|k| k.with_mc_budget(self.region.mc_samples, self.region.mc_tolerance))
            .map_err(|e| e.to_string())
    }

    pub fn theta_family(&self) -> ThetaFamily {
        let c = self
            .region
            .h2_constant
            .unwrap_or_else(|| ThetaFamily::default_constant(&self.region.region));
        ThetaFamily::new(self.region.region, c)
    }

    pub fn echo_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Region block with the flat key set `kind, r, theta_star, ..., eta, eps,
/// h2_constant` (angles in radians, lengths in simulation units).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RegionConfigRepr", into = "RegionConfigRepr")]
pub struct RegionConfig {
    pub region: SensitivityRegion,
    pub eta: f64,
    pub eps: f64,
    /// (H2) constant; per-region default when absent.
    pub h2_constant: Option<f64>,
    pub mc_samples: usize,
    pub mc_tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionConfigRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knee: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default = "default_width")]
    eta: f64,
    #[serde(default = "default_width")]
    eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h2_constant: Option<f64>,
    #[serde(default = "default_mc_samples")]
    mc_samples: usize,
    #[serde(default = "default_mc_tol")]
    mc_tolerance: f64,
}

impl TryFrom<RegionConfigRepr> for RegionConfig {
    type Error = String;

    fn try_from(raw: RegionConfigRepr) -> Result<Self, String> {
        let region = match raw.kind.as_str() {
            "fixed_ball" => SensitivityRegion::FixedBall {
                r: raw.r.ok_or("fixed_ball needs key r")?,
            },
            "variable_ball" => SensitivityRegion::VariableBall {
                r: crate::geometry::RadiusProfile {
                    base: raw.base.ok_or("variable_ball needs key base")?,
                    gain: raw.gain.ok_or("variable_ball needs key gain")?,
                    knee: raw.knee.unwrap_or(1.0),
                },
            },
            "vision_cone" => SensitivityRegion::VisionCone {
                r: raw.r.ok_or("vision_cone needs key r")?,
                theta: crate::geometry::ThetaProfile {
                    theta_star: raw.theta_star.ok_or("vision_cone needs key theta_star")?,
                    kappa: raw.kappa.unwrap_or(1.0),
                },
                dim: raw.dim.unwrap_or(2),
            },
            other => return Err(format!("unknown region kind {other:?}")),
        };
        Ok(Self {
            region,
            eta: raw.eta,
            eps: raw.eps,
            h2_constant: raw.h2_constant,
            mc_samples: raw.mc_samples,
            mc_tolerance: raw.mc_tolerance,
        })
    }
}

impl From<RegionConfig> for RegionConfigRepr {
    fn from(cfg: RegionConfig) -> Self {
        let mut raw = RegionConfigRepr {
            kind: String::new(),
            r: None,
            base: None,
            gain: None,
            knee: None,
            theta_star: None,
            kappa: None,
            dim: None,
            eta: cfg.eta,
            eps: cfg.eps,
            h2_constant: cfg.h2_constant,
            mc_samples: cfg.mc_samples,
            mc_tolerance: cfg.mc_tolerance,
        };
        match cfg.region {
            SensitivityRegion::FixedBall { r } => {
                raw.kind = "fixed_ball".into();
                raw.r = Some(r);
            }
            SensitivityRegion::VariableBall { r } => {
                raw.kind = "variable_ball".into();
                raw.base = Some(r.base);
                raw.gain = Some(r.gain);
                raw.knee = Some(r.knee);
            }
            SensitivityRegion::VisionCone { r, theta, dim } => {
                raw.kind = "vision_cone".into();
                raw.r = Some(r);
                raw.theta_star = Some(theta.theta_star);
                raw.kappa = Some(theta.kappa);
                raw.dim = Some(dim);
            }
        }
        raw
    }
}

fn default_width() -> f64 {
    0.05
}

fn default_mc_samples() -> usize {
    4_194_304
}

fn default_mc_tol() -> f64 {
    1e-3
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            region: SensitivityRegion::FixedBall { r: 1.0 },
            eta: default_width(),
            eps: default_width(),
            h2_constant: None,
            mc_samples: default_mc_samples(),
            mc_tolerance: default_mc_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub n: usize,
    pub dim: usize,
    pub sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub v_m: f64,
    /// Initial spread: positions per component, velocity scale.
    pub x_width: f64,
    pub v_width: f64,
    pub snapshot_times: Vec<f64>,
    pub record_boundary_events: bool,
    pub x_period: Option<f64>,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            n: 32,
            dim: 2,
            sigma: 0.1,
            dt: 1e-3,
            t_end: 1.0,
            v_m: 1.0,
            x_width: 1.0,
            v_width: 0.5,
            snapshot_times: vec![0.0, 0.5, 1.0],
            record_boundary_events: true,
            x_period: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanfieldMode {
    Kinetic,
    Proxy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanfieldBlock {
    pub mode: MeanfieldMode,
    pub nx: usize,
    pub nv: usize,
    pub length: f64,
    /// `v_box = v_box_factor * v_m`.
    pub v_box_factor: f64,
    pub sigma: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub x_width: f64,
    pub v_width: f64,
    pub moment_q: f64,
    pub m_samples: usize,
    pub refresh_every: u64,
    pub dt_proxy: f64,
}

impl Default for MeanfieldBlock {
    fn default() -> Self {
        Self {
            mode: MeanfieldMode::Kinetic,
            nx: 256,
            nv: 128,
            length: 2.0 * std::f64::consts::PI,
            v_box_factor: 1.25,
            sigma: 0.1,
            t_end: 1.0,
            snapshot_times: vec![0.25, 0.5, 0.75, 1.0],
            x_width: 1.2,
            v_width: 0.8,
            moment_q: 4.0,
            m_samples: 4096,
            refresh_every: 1,
            dt_proxy: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosBlock {
    pub n_ladder: Vec<usize>,
    pub replicas: usize,
    pub horizon: f64,
    pub dt: f64,
    pub sigma: f64,
    pub m_proxy: usize,
    pub refresh_every: u64,
    pub q: f64,
    pub x_width: f64,
    pub v_width: f64,
    /// Also compare each replica against the kinetic grid solution.
    pub kinetic_target: Option<crate::chaos::KineticTargetSpec>,
}

impl Default for ChaosBlock {
    fn default() -> Self {
        Self {
            n_ladder: vec![64, 128, 256, 512, 1024],
            replicas: 32,
            horizon: 1.0,
            dt: 1e-3,
            sigma: 0.05,
            m_proxy: 8192,
            refresh_every: 1,
            q: 4.0,
            x_width: 1.0,
            v_width: 0.8,
            kinetic_target: None,
        }
    }
}

impl ChaosBlock {
    pub fn initial_law(&self) -> InitialLaw {
        InitialLaw { x_center: 0.0, x_width: self.x_width, v_width: self.v_width }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    pub h2_samples: u64,
    pub rope_samples: u64,
    pub w1_instances: usize,
    pub lln_ladder: Vec<usize>,
    pub lln_replicas: usize,
    pub dim: usize,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            h2_samples: 100_000,
            rope_samples: 100_000,
            w1_instances: 50,
            lln_ladder: vec![32, 128, 512, 1024],
            lln_replicas: 32,
            dim: 2,
        }
    }
}

/// Declared acceptance thresholds; any violation makes the CLI exit nonzero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub max_speed: Option<f64>,
    pub mass_drift: Option<f64>,
    pub momentum_drift: Option<f64>,
    pub slope_band: Option<(f64, f64)>,
    pub require_h2_clean: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for kind in [
            ExperimentKind::Simulate,
            ExperimentKind::Meanfield,
            ExperimentKind::Chaos,
            ExperimentKind::Verify,
        ] {
            let cfg = RunConfig::defaults(kind);
            let echoed = cfg.echo_json();
            let back = RunConfig::from_json(&echoed).unwrap();
            assert_eq!(back.echo_json(), echoed);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"experiment": "simulate", "sim": {"n": 8, "mystery_knob": 3}}"#;
        let err = RunConfig::from_json(text).unwrap_err();
        assert!(err.contains("mystery_knob"), "{err}");
    }

    #[test]
    fn region_block_parses_kinds() {
        let text = r#"{
            "experiment": "verify",
            "region": {"kind": "vision_cone", "r": 1.0, "theta_star": 0.785398,
                       "kappa": 1.0, "dim": 2, "eta": 0.05, "eps": 0.05}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert!(matches!(cfg.region.region, SensitivityRegion::VisionCone { .. }));
        // default constant materializes through the family
        assert!(cfg.theta_family().c > 0.0);
        // unknown region keys rejected
        let bad = r#"{"experiment": "verify", "region": {"kind": "fixed_ball", "r": 1.0, "radius": 2.0}}"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn bad_widths_rejected() {
        let text = r#"{"experiment": "simulate", "region": {"kind": "fixed_ball", "r": 1.0, "eta": 0.9}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }
}
