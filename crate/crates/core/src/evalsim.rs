//! Closed-loop evaluation of a controller against a spec, and FFT-based
//! stochastic simulation on the measured responses.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::{interpolate_at, ComplexResponse, FrequencyGrid, PlantCase};
use crate::polysys::{closed_loop, positivity_margin, ClosedLoopChannel, Controller, LoopConfig};
use crate::synth::{h2_terms_in, quadrature, H2Terms, SynthesisSpec, HINF_CHANNELS};

pub use crate::synth::h2_of;

/// Slack on weighted peaks before a channel counts as failing.
pub const PEAK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPeak {
    pub channel: ClosedLoopChannel,
    /// `max_k |W_k T_k|`
    pub peak: f64,
    pub freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEvaluation {
    pub plant: String,
    pub config: LoopConfig,
    pub positivity_margin: f64,
    pub peaks: Vec<ChannelPeak>,
    pub h2: H2Terms,
    pub hinf_pass: bool,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub loops: Vec<LoopEvaluation>,
    /// Plant average of `||S D_p||^2 + ||S P_cv D_f||^2` in the dual-stage loop.
    pub objective: f64,
    /// Plant average of the PZT stroke variance in the dual-stage loop.
    pub stroke_variance: f64,
    pub stroke_budget: f64,
    pub stroke_pass: bool,
    pub pass: bool,
}

pub fn evaluate(k: &Controller, spec: &SynthesisSpec) -> Result<EvaluationReport> {
    spec.validate()?;
    let grid = spec.grid();
    let tau = quadrature(grid);
    let mut loops = Vec::new();
    let mut objective = 0.0;
    let mut stroke = 0.0;
    for plant in spec.plants.cases() {
        for cfg in LoopConfig::ALL {
            let mut peaks = Vec::new();
            for ch in HINF_CHANNELS {
                let w = spec.weights.get(cfg, ch)?.magnitudes();
                let t = closed_loop(k, plant, cfg, ch)?;
                let (idx, peak) = t
                    .values()
                    .iter()
                    .zip(w)
                    .map(|(v, w)| w * v.norm())
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
                peaks.push(ChannelPeak {
                    channel: ch,
                    peak,
                    freq_hz: grid.freqs()[idx],
                });
            }
            let h2 = h2_terms_in(k, spec, plant, cfg, &tau)?;
            if cfg == LoopConfig::Dsa {
                objective += h2.objective();
                stroke += h2.stroke();
            }
            let margin = positivity_margin(k, plant, cfg);
            loops.push(LoopEvaluation {
                plant: plant.id.clone(),
                config: cfg,
                positivity_margin: margin,
                hinf_pass: peaks.iter().all(|p| p.peak <= 1.0 + PEAK_TOL),
                stable: margin > 0.0,
                peaks,
                h2,
            });
        }
    }
    let l = spec.plants.len() as f64;
    let budget = spec.stroke.variance_budget();
    let stroke_variance = stroke / l;
    let stroke_pass = stroke_variance <= budget * (1.0 + PEAK_TOL);
    let pass = stroke_pass && loops.iter().all(|e| e.hinf_pass && e.stable);
    Ok(EvaluationReport {
        loops,
        objective: objective / l,
        stroke_variance,
        stroke_budget: budget,
        stroke_pass,
        pass,
    })
}

/// `freq_hz,channel,config,plant,mag_db,phase_deg,inv_weight_db` for the
/// weighted channels, plus the PZT output map in the dual-stage loop with
/// an empty weight column.
pub fn bode_csv(k: &Controller, spec: &SynthesisSpec) -> Result<String> {
    let grid = spec.grid();
    let mut out = String::from("freq_hz,channel,config,plant,mag_db,phase_deg,inv_weight_db\n");
    let db = |v: f64| 20.0 * v.log10();
    for plant in spec.plants.cases() {
        for cfg in LoopConfig::ALL {
            let mut channels: Vec<(ClosedLoopChannel, Option<&[f64]>)> = Vec::new();
            for ch in HINF_CHANNELS {
                channels.push((ch, Some(spec.weights.get(cfg, ch)?.magnitudes())));
            }
            if cfg == LoopConfig::Dsa {
                channels.push((ClosedLoopChannel::YdYpzt, None));
            }
            for (ch, w) in channels {
                let t = closed_loop(k, plant, cfg, ch)?;
                for (idx, v) in t.values().iter().enumerate() {
                    let inv = w.map(|w| format!("{}", -db(w[idx]))).unwrap_or_default();
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        grid.freqs()[idx],
                        ch,
                        cfg,
                        plant.id,
                        db(v.norm()),
                        v.arg().to_degrees(),
                        inv
                    ));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NoiseKind {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    /// Record length, a power of two no smaller than `MIN_SAMPLES`.
    pub samples: usize,
    pub noise: NoiseKind,
    pub track_width_m: f64,
}

pub const MIN_SAMPLES: usize = 1 << 16;

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 1 << 18,
            noise: NoiseKind::Uniform,
            track_width_m: 100e-9,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.samples.is_power_of_two() || self.samples < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "samples must be a power of two >= {MIN_SAMPLES}, got {}",
                self.samples
            )));
        }
        if !(self.track_width_m.is_finite() && self.track_width_m > 0.0) {
            return Err(Error::Config(format!("track width must be positive, got {}", self.track_width_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetrics {
    pub sigma3_e_m: f64,
    /// `sigma3_e_m` as a percentage of the track width.
    pub sigma3_e_pct: f64,
    pub max_abs_ycp_m: f64,
    pub var_ycp_m2: f64,
    pub var_e_m2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub ts: f64,
    pub e: Vec<f64>,
    pub ycp: Vec<f64>,
    pub metrics: SimulationMetrics,
}

impl Simulation {
    /// `t_s,e_m,ycp_m`
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.e.len() * 48);
        out.push_str("t_s,e_m,ycp_m\n");
        for (i, (e, y)) in self.e.iter().zip(&self.ycp).enumerate() {
            out.push_str(&format!("{},{:e},{:e}\n", i as f64 * self.ts, e, y));
        }
        out
    }
}

fn white(rng: &mut ChaCha8Rng, kind: NoiseKind, m: usize) -> Vec<f64> {
    let a = 3f64.sqrt();
    match kind {
        NoiseKind::Uniform => (0..m).map(|_| rng.random_range(-a..a)).collect(),
        NoiseKind::Gaussian => (0..m).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Resamples a filter known on the measurement grid onto FFT bins. The
/// squared magnitude is interpolated linearly, which is what the trapezoid
/// quadrature assumes between nodes; the phase follows the complex-linear
/// interpolant.
fn to_bins(freqs: &[f64], v: &[Complex64], bins: &[f64]) -> Result<Vec<Complex64>> {
    let power: Vec<Complex64> = v.iter().map(|c| Complex64::new(c.norm_sqr(), 0.0)).collect();
    let p = interpolate_at(freqs, &power, bins)?;
    let c = interpolate_at(freqs, v, bins)?;
    Ok(p.iter()
        .zip(&c)
        .map(|(p, c)| {
            let mag = p.re.max(0.0).sqrt();
            if c.norm() > 0.0 {
                c * (mag / c.norm())
            } else {
                Complex64::new(mag, 0.0)
            }
        })
        .collect())
}

/// Dual-stage closed loop driven by `D_p w_1 + P_cv D_f w_2` with two
/// independent white sequences, filtered circularly in the frequency domain.
pub fn simulate(
    k: &Controller,
    plant: &PlantCase,
    dp: &ComplexResponse,
    df: &ComplexResponse,
    cfg: &SimulationConfig,
) -> Result<Simulation> {
    cfg.validate()?;
    let grid: &Arc<FrequencyGrid> = plant.grid();
    crate::freqdata::ensure_same_grid(grid, dp.grid())?;
    crate::freqdata::ensure_same_grid(grid, df.grid())?;
    if !grid.spans_full_band() {
        return Err(Error::Config(
            "simulation needs responses measured from 0 Hz up to the Nyquist frequency".into(),
        ));
    }
    let m = cfg.samples;
    let ts = grid.ts();
    let bins: Vec<f64> = (0..=m / 2).map(|j| j as f64 / (m as f64 * ts)).collect();
    let s = closed_loop(k, plant, LoopConfig::Dsa, ClosedLoopChannel::SDe)?;
    let y = closed_loop(k, plant, LoopConfig::Dsa, ClosedLoopChannel::YdYpzt)?;
    let dfp = plant.p_cv.mul(df)?;
    let filter = |t: &ComplexResponse, d: &ComplexResponse| -> Result<Vec<Complex64>> {
        let v: Vec<Complex64> = t.values().iter().zip(d.values()).map(|(a, b)| a * b).collect();
        to_bins(grid.freqs(), &v, &bins)
    };
    let [s_dp, s_df, y_dp, y_df] = [filter(&s, dp)?, filter(&s, &dfp)?, filter(&y, dp)?, filter(&y, &dfp)?];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w1 = white(&mut rng, cfg.noise, m);
    let w2 = white(&mut rng, cfg.noise, m);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let spectrum = |w: &[f64]| {
        let mut buf: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        buf
    };
    let n1 = spectrum(&w1);
    let n2 = spectrum(&w2);
    // bins above m/2 mirror the lower half so the output is real
    let two_sided = |h: &dyn Fn(usize) -> Complex64| -> Vec<Complex64> {
        (0..m).map(|j| if j <= m / 2 { h(j) } else { h(m - j).conj() }).collect()
    };
    let out = |h1: &[Complex64], h2: &[Complex64]| -> Vec<f64> {
        let h1 = two_sided(&|b| h1[b]);
        let h2 = two_sided(&|b| h2[b]);
        let mut buf: Vec<Complex64> = (0..m).map(|j| h1[j] * n1[j] + h2[j] * n2[j]).collect();
        inv.process(&mut buf);
        let scale = 1.0 / m as f64;
        buf.iter().map(|c| c.re * scale).collect()
    };
    let e = out(&s_dp, &s_df);
    let ycp = out(&y_dp, &y_df);

    let var_e = variance(&e);
    let sigma3 = 3.0 * var_e.sqrt();
    let metrics = SimulationMetrics {
        sigma3_e_m: sigma3,
        sigma3_e_pct: 100.0 * sigma3 / cfg.track_width_m,
        max_abs_ycp_m: ycp.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
        var_ycp_m2: variance(&ycp),
        var_e_m2: var_e,
    };
    Ok(Simulation { ts, e, ycp, metrics })
}

/// Per-case metrics as written by the `sim` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case: String,
    pub seed: u64,
    pub samples: usize,
    pub noise: NoiseKind,
    pub track_width_m: f64,
    #[serde(flatten)]
    pub metrics: SimulationMetrics,
}
