//! Polynomial controller factorization `K = X Y^-1`, its evaluation on the
//! unit circle, and closed-loop maps of the dual-stage loop.
//!
//! `X(z)` has one row per actuator (row 0 drives the VCM, row 1 the PZT)
//! and `Y(z) = z^p + y_{p-1} z^{p-1} + ... + y_0` is monic. Coefficients are
//! stored highest degree first.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::{ensure_same_grid, ComplexResponse, FrequencyGrid, PlantCase};

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    ts: f64,
    order: usize,
    x: [Vec<f64>; 2],
    y: Vec<f64>,
}

impl Controller {
    pub fn new(ts: f64, x_vcm: Vec<f64>, x_pzt: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let order = y.len();
        if x_vcm.len() != order + 1 || x_pzt.len() != order + 1 {
            return Err(Error::invariant(format!(
                "controller of order {order} needs {} numerator coefficients per row, got {} and {}",
                order + 1,
                x_vcm.len(),
                x_pzt.len()
            )));
        }
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::invariant(format!("sampling period must be positive, got {ts}")));
        }
        if x_vcm.iter().chain(&x_pzt).chain(&y).any(|c| !c.is_finite()) {
            return Err(Error::invariant("controller coefficients must be finite"));
        }
        Ok(Self {
            ts,
            order,
            x: [x_vcm, x_pzt],
            y,
        })
    }

    /// `X = 0`, `Y = z^p`.
    pub fn zero(ts: f64, order: usize) -> Self {
        Self {
            ts,
            order,
            x: [vec![0.0; order + 1], vec![0.0; order + 1]],
            y: vec![0.0; order],
        }
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Numerator row: 0 = VCM input, 1 = PZT input.
    pub fn x_row(&self, row: usize) -> &[f64] {
        &self.x[row]
    }

    /// Non-leading denominator coefficients `[y_{p-1} .. y_0]`.
    pub fn y_coeffs(&self) -> &[f64] {
        &self.y
    }

    /// Number of free coefficients, `3p + 2`.
    pub fn n_params(&self) -> usize {
        param_count(self.order)
    }

    /// Flat parameter vector `[x_vcm.., x_pzt.., y..]`.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.x[0]);
        v.extend_from_slice(&self.x[1]);
        v.extend_from_slice(&self.y);
        v
    }

    pub fn from_params(ts: f64, order: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != param_count(order) {
            return Err(Error::invariant(format!(
                "order {order} needs {} parameters, got {}",
                param_count(order),
                theta.len()
            )));
        }
        let n = order + 1;
        Self::new(ts, theta[..n].to_vec(), theta[n..2 * n].to_vec(), theta[2 * n..].to_vec())
    }

    /// Evaluates `(X_vcm, X_pzt, Y)` at a point `z`.
    pub fn eval_at(&self, z: Complex64) -> [Complex64; 3] {
        let horner = |coeffs: &[f64], lead: Option<f64>| {
            let mut acc = Complex64::new(lead.unwrap_or(0.0), 0.0);
            for &c in coeffs {
                acc = acc * z + c;
            }
            acc
        };
        let y = if self.order == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            horner(&self.y, Some(1.0))
        };
        [horner(&self.x[0], None), horner(&self.x[1], None), y]
    }

    /// Evaluates `z^-p (X_vcm, X_pzt, Y)`, the causal form used for the
    /// positivity certificate.
    pub fn eval_causal_at(&self, z: Complex64) -> [Complex64; 3] {
        let shift = z.powi(-(self.order as i32));
        let [a, b, c] = self.eval_at(z);
        [a * shift, b * shift, c * shift]
    }

    pub fn to_json(&self) -> ControllerJson {
        ControllerJson {
            ts: self.ts,
            order: self.order,
            x: [self.x[0].clone(), self.x[1].clone()],
            y: self.y.clone(),
        }
    }

    pub fn from_json(doc: ControllerJson) -> Result<Self> {
        if doc.y.len() != doc.order {
            return Err(Error::invariant(format!(
                "controller order {} but {} denominator coefficients",
                doc.order,
                doc.y.len()
            )));
        }
        let [a, b] = doc.x;
        Self::new(doc.ts, a, b, doc.y)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(crate::io::read_json(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path.as_ref(), &self.to_json())
    }
}

pub fn param_count(order: usize) -> usize {
    3 * order + 2
}

/// On-disk controller schema. `y` omits the implied leading 1.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerJson {
    pub ts: f64,
    pub order: usize,
    pub x: [Vec<f64>; 2],
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopConfig {
    #[serde(rename = "VCM_ONLY")]
    VcmOnly,
    #[serde(rename = "DSA")]
    Dsa,
}

impl LoopConfig {
    pub const ALL: [LoopConfig; 2] = [LoopConfig::VcmOnly, LoopConfig::Dsa];

    pub fn as_str(self) -> &'static str {
        match self {
            LoopConfig::VcmOnly => "VCM_ONLY",
            LoopConfig::Dsa => "DSA",
        }
    }

    /// Factor applied to the PZT path: the PZT is switched off in single-stage mode.
    pub fn pzt_gain(self) -> f64 {
        match self {
            LoopConfig::VcmOnly => 0.0,
            LoopConfig::Dsa => 1.0,
        }
    }
}

impl fmt::Display for LoopConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClosedLoopChannel {
    /// Disturbance to position error, `Y / P`.
    #[serde(rename = "S_de")]
    SDe,
    /// Disturbance to VCM input, `X_vcm / P`.
    #[serde(rename = "U_d_uvcm")]
    UdUvcm,
    /// Disturbance to PZT input, `X_pzt / P`.
    #[serde(rename = "U_d_upzt")]
    UdUpzt,
    /// Disturbance to PZT output, `P_cp X_pzt / P`.
    #[serde(rename = "Y_d_ypzt")]
    YdYpzt,
}

impl ClosedLoopChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClosedLoopChannel::SDe => "S_de",
            ClosedLoopChannel::UdUvcm => "U_d_uvcm",
            ClosedLoopChannel::UdUpzt => "U_d_upzt",
            ClosedLoopChannel::YdYpzt => "Y_d_ypzt",
        }
    }
}

impl fmt::Display for ClosedLoopChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `X_vcm(z_k)`, `X_pzt(z_k)` and `Y(z_k)` on a grid.
#[derive(Debug, Clone)]
pub struct ControllerResponse {
    pub x1: ComplexResponse,
    pub x2: ComplexResponse,
    pub y: ComplexResponse,
}

pub fn eval_controller(k: &Controller, grid: &Arc<FrequencyGrid>) -> ControllerResponse {
    let n = grid.len();
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let [a, b, c] = k.eval_at(grid.z(i));
        x1.push(a);
        x2.push(b);
        y.push(c);
    }
    // polynomial values at unit-modulus points of finite coefficients are finite
    ControllerResponse {
        x1: ComplexResponse::new(grid.clone(), x1).expect("finite polynomial values"),
        x2: ComplexResponse::new(grid.clone(), x2).expect("finite polynomial values"),
        y: ComplexResponse::new(grid.clone(), y).expect("finite polynomial values"),
    }
}

/// Pointwise loop quantities at one frequency, in causal normalization.
#[derive(Debug, Clone, Copy)]
pub struct LoopPoint {
    pub x1: Complex64,
    pub x2: Complex64,
    pub y: Complex64,
    /// `Y + G X`
    pub p: Complex64,
    /// PZT plant value with the configuration gain applied.
    pub p_cp: Complex64,
}

pub fn loop_point(k: &Controller, plant: &PlantCase, cfg: LoopConfig, idx: usize) -> LoopPoint {
    let z = plant.grid().z(idx);
    let [x1, x2, y] = k.eval_causal_at(z);
    let p_cv = plant.p_cv.values()[idx];
    let p_cp = plant.p_cp.values()[idx] * cfg.pzt_gain();
    LoopPoint {
        x1,
        x2,
        y,
        p: y + p_cv * x1 + p_cp * x2,
        p_cp,
    }
}

fn check_denominator(lp: &LoopPoint, freq_hz: f64) -> Result<()> {
    if lp.p.norm() <= 1e-12 * lp.y.norm().max(1.0) {
        return Err(Error::SingularDenominator { freq_hz });
    }
    Ok(())
}

/// One closed-loop map of the dual-stage loop on the plant's grid.
pub fn closed_loop(
    k: &Controller,
    plant: &PlantCase,
    cfg: LoopConfig,
    ch: ClosedLoopChannel,
) -> Result<ComplexResponse> {
    let grid = plant.grid();
    let mut values = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let lp = loop_point(k, plant, cfg, idx);
        check_denominator(&lp, grid.freqs()[idx])?;
        let num = match ch {
            ClosedLoopChannel::SDe => lp.y,
            ClosedLoopChannel::UdUvcm => lp.x1,
            ClosedLoopChannel::UdUpzt => lp.x2,
            ClosedLoopChannel::YdYpzt => lp.p_cp * lp.x2,
        };
        values.push(num / lp.p);
    }
    ComplexResponse::new(grid.clone(), values)
}

/// `min_k Re[z_k^-p (Y + G X)(z_k)]`. Strict positivity certifies
/// closed-loop stability for a stable plant.
pub fn positivity_margin(k: &Controller, plant: &PlantCase, cfg: LoopConfig) -> f64 {
    (0..plant.grid().len())
        .map(|idx| loop_point(k, plant, cfg, idx).p.re)
        .fold(f64::INFINITY, f64::min)
}

/// `Y + G X` on the grid in raw (non-normalized) polynomial form, as used
/// for winding-number diagnostics.
pub fn return_difference(k: &Controller, plant: &PlantCase, cfg: LoopConfig) -> ComplexResponse {
    let grid = plant.grid();
    let values = (0..grid.len())
        .map(|idx| {
            let [x1, x2, y] = k.eval_at(grid.z(idx));
            y + plant.p_cv.values()[idx] * x1 + plant.p_cp.values()[idx] * cfg.pzt_gain() * x2
        })
        .collect();
    ComplexResponse::new(grid.clone(), values).expect("finite loop values")
}

fn wrap_phase(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Net counterclockwise encirclements of `around` by the closed curve made
/// of the stored half-axis samples and their conjugate reflection.
pub fn winding_number(curve: &ComplexResponse, around: Complex64) -> Result<i64> {
    let vals = curve.values();
    let scale = vals.iter().map(|v| v.norm()).fold(around.norm(), f64::max).max(1.0);
    let freqs = curve.grid().freqs();
    for (k, v) in vals.iter().enumerate() {
        if (v - around).norm() <= 1e-12 * scale {
            return Err(Error::Winding(format!("curve touches the point at {} Hz", freqs[k])));
        }
    }
    // negative frequencies carry conj(c(|f|))
    let rel = |v: Complex64| v - around;
    let rel_conj = |v: Complex64| v.conj() - around;

    let step = |a: Complex64, b: Complex64, at: f64| -> Result<f64> {
        let d = wrap_phase(b.arg() - a.arg());
        if d.abs() >= PI * (1.0 - 1e-12) {
            return Err(Error::Winding(format!("phase step of pi or more near {at} Hz; grid too coarse")));
        }
        Ok(d)
    };

    let mut total = 0.0;
    // negative half, from -f_N up to -f_0
    for k in (1..vals.len()).rev() {
        total += step(rel_conj(vals[k]), rel_conj(vals[k - 1]), freqs[k - 1])?;
    }
    // -f_0 -> f_0
    total += step(rel_conj(vals[0]), rel(vals[0]), freqs[0])?;
    // positive half
    for k in 1..vals.len() {
        total += step(rel(vals[k - 1]), rel(vals[k]), freqs[k])?;
    }
    // close f_N -> -f_N
    let last = vals.len() - 1;
    total += step(rel(vals[last]), rel_conj(vals[last]), freqs[last])?;

    Ok((total / (2.0 * PI)).round() as i64)
}

/// Confirms both responses share a grid; used by callers that mix maps.
pub fn same_grid(a: &ComplexResponse, b: &ComplexResponse) -> Result<()> {
    ensure_same_grid(a.grid(), b.grid())
}
