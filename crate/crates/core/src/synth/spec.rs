use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::{ensure_same_grid, ComplexResponse, FrequencyGrid, PlantSet, WeightCurve};
use crate::polysys::{ClosedLoopChannel, LoopConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrokeInterpretation {
    VarianceBound,
    #[default]
    ThreeSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeLimit {
    pub limit_m: f64,
    #[serde(default)]
    pub interpretation: StrokeInterpretation,
}

impl StrokeLimit {
    /// Bound on the average stroke variance, in m^2.
    pub fn variance_budget(&self) -> f64 {
        let mu = match self.interpretation {
            StrokeInterpretation::VarianceBound => self.limit_m,
            StrokeInterpretation::ThreeSigma => self.limit_m / 3.0,
        };
        mu * mu
    }
}

/// Inverse-bound weights for the enforced H∞ channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightSet {
    pub s_vcm: Option<WeightCurve>,
    pub s_dsa: Option<WeightCurve>,
    pub u_vcm: Option<WeightCurve>,
    pub u_dsa: Option<WeightCurve>,
}

impl WeightSet {
    pub fn get(&self, cfg: LoopConfig, ch: ClosedLoopChannel) -> Result<&WeightCurve> {
        let slot = match (cfg, ch) {
            (LoopConfig::VcmOnly, ClosedLoopChannel::SDe) => self.s_vcm.as_ref(),
            (LoopConfig::Dsa, ClosedLoopChannel::SDe) => self.s_dsa.as_ref(),
            (LoopConfig::VcmOnly, ClosedLoopChannel::UdUvcm) => self.u_vcm.as_ref(),
            (LoopConfig::Dsa, ClosedLoopChannel::UdUvcm) => self.u_dsa.as_ref(),
            _ => None,
        };
        slot.ok_or_else(|| Error::MissingWeight(format!("{} in {}", ch.as_str(), cfg.as_str())))
    }
}

/// Channels carrying an H∞ constraint.
pub const HINF_CHANNELS: [ClosedLoopChannel; 2] = [ClosedLoopChannel::SDe, ClosedLoopChannel::UdUvcm];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSpec {
    pub plants: PlantSet,
    pub order: usize,
    pub weights: WeightSet,
    pub dp: ComplexResponse,
    pub df: ComplexResponse,
    pub stroke: StrokeLimit,
    pub eps_margin: f64,
    pub n_iter: usize,
    pub conv_tol: f64,
}

pub const DEFAULT_EPS_MARGIN: f64 = 1e-6;
pub const DEFAULT_N_ITER: usize = 2;
pub const DEFAULT_CONV_TOL: f64 = 1e-4;

impl SynthesisSpec {
    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        self.plants.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid();
        ensure_same_grid(g, self.dp.grid())?;
        ensure_same_grid(g, self.df.grid())?;
        for cfg in LoopConfig::ALL {
            for ch in HINF_CHANNELS {
                ensure_same_grid(g, self.weights.get(cfg, ch)?.grid())?;
            }
        }
        if !(self.stroke.limit_m.is_finite() && self.stroke.limit_m > 0.0) {
            return Err(Error::Config(format!("stroke limit must be positive, got {}", self.stroke.limit_m)));
        }
        if !(self.eps_margin.is_finite() && self.eps_margin > 0.0) {
            return Err(Error::Config(format!("eps_margin must be positive, got {}", self.eps_margin)));
        }
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if !(self.conv_tol.is_finite() && self.conv_tol >= 0.0) {
            return Err(Error::Config(format!("conv_tol must be nonnegative, got {}", self.conv_tol)));
        }
        Ok(())
    }

    pub fn disturbance_is_zero(&self) -> bool {
        self.dp.is_zero() && self.df.is_zero()
    }
}
