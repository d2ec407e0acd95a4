//! Synthetic dual-stage benchmark: plant family, disturbance spectra and
//! default weights, all generated on a frequency grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::{ComplexResponse, FrequencyGrid, PlantCase, PlantSet, WeightCurve};
use crate::synth::{
    StrokeInterpretation, StrokeLimit, SynthesisSpec, WeightSet, DEFAULT_CONV_TOL, DEFAULT_EPS_MARGIN, DEFAULT_N_ITER,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub freq_hz: f64,
    pub zeta: f64,
    /// Residue relative to the rigid-body gain.
    pub gain: f64,
}

impl ModeSpec {
    fn check(&self) -> Result<()> {
        if !(self.freq_hz > 0.0 && self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Config(format!("invalid mode {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub seed: u64,
    pub n_vcm_variants: usize,
    pub n_pzt_variants: usize,
    /// Relative spread of every mode frequency.
    pub perturbation: f64,
    pub ts: f64,
    pub n_points: usize,
    /// Rigid-body gain `k_v` of `k_v / (s + w_r)^2`.
    pub vcm_gain: f64,
    /// Low-frequency pivot `w_r / 2 pi`.
    pub vcm_pivot_hz: f64,
    pub vcm_modes: Vec<ModeSpec>,
    pub pzt_mode: ModeSpec,
    /// Input delay in samples.
    pub delay_samples: f64,
    /// Peak of `|D_p|` in meters.
    pub dp_peak_m: f64,
    /// Peak of `|P_cv D_f|` on the nominal plant, relative to `dp_peak_m`.
    pub df_rel: f64,
    pub target_bw_hz: f64,
    pub s_floor: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_vcm_variants: 3,
            n_pzt_variants: 3,
            perturbation: 0.05,
            ts: 1.0 / 50400.0,
            n_points: 300,
            vcm_gain: 40.0 * (2.0 * PI * 1000.0f64).powi(2),
            vcm_pivot_hz: 10.0,
            vcm_modes: vec![
                ModeSpec {
                    freq_hz: 2500.0,
                    zeta: 0.02,
                    gain: 0.3,
                },
                ModeSpec {
                    freq_hz: 5500.0,
                    zeta: 0.015,
                    gain: -0.2,
                },
                ModeSpec {
                    freq_hz: 8000.0,
                    zeta: 0.01,
                    gain: 0.15,
                },
            ],
            pzt_mode: ModeSpec {
                freq_hz: 40000.0,
                zeta: 0.03,
                gain: 1.0,
            },
            delay_samples: 1.5,
            dp_peak_m: 30e-9,
            df_rel: 0.5,
            target_bw_hz: 600.0,
            s_floor: 1e-3,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vcm_variants == 0 || self.n_pzt_variants == 0 {
            return Err(Error::Config("variant counts must be at least 1".into()));
        }
        if !(0.0..0.2).contains(&self.perturbation) {
            return Err(Error::Config(format!("perturbation must lie in [0, 0.2), got {}", self.perturbation)));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) || self.n_points < 2 {
            return Err(Error::Config("need ts > 0 and at least 2 grid points".into()));
        }
        if !(self.vcm_gain > 0.0 && self.vcm_pivot_hz > 0.0 && self.dp_peak_m >= 0.0 && self.df_rel >= 0.0) {
            return Err(Error::Config("plant and disturbance scales must be positive".into()));
        }
        for m in self.vcm_modes.iter().chain([&self.pzt_mode]) {
            m.check()?;
        }
        let nyq = 0.5 / self.ts;
        if !(self.target_bw_hz > 0.0 && self.target_bw_hz < nyq / 4.0) {
            return Err(Error::Config(format!(
                "target bandwidth must lie in (0, {} Hz), got {}",
                nyq / 4.0,
                self.target_bw_hz
            )));
        }
        if !(self.s_floor > 0.0 && self.s_floor < 2.0) {
            return Err(Error::Config("s_floor must lie in (0, 2)".into()));
        }
        Ok(())
    }

    /// `n_points` equally spaced points from DC to Nyquist.
    pub fn grid(&self) -> Result<Arc<FrequencyGrid>> {
        Ok(Arc::new(FrequencyGrid::uniform(self.ts, 0.0, 0.5 / self.ts, self.n_points)?))
    }
}

fn s_of(f: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * f)
}

/// `w^2 / (s^2 + 2 zeta w s + w^2)`
fn second_order(f: f64, freq_hz: f64, zeta: f64) -> Complex64 {
    let s = s_of(f);
    let w = 2.0 * PI * freq_hz;
    w * w / (s * s + 2.0 * zeta * w * s + w * w)
}

/// `2 zeta w s / (s^2 + 2 zeta w s + w^2)`: unit peak at `freq_hz`.
fn band(f: f64, freq_hz: f64, zeta: f64) -> Complex64 {
    let s = s_of(f);
    let w = 2.0 * PI * freq_hz;
    2.0 * zeta * w * s / (s * s + 2.0 * zeta * w * s + w * w)
}

fn delay(f: f64, cfg: &BenchConfig) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * f * cfg.delay_samples * cfg.ts)
}

fn vcm_response(f: f64, cfg: &BenchConfig, modes: &[ModeSpec]) -> Complex64 {
    let s = s_of(f);
    let wr = 2.0 * PI * cfg.vcm_pivot_hz;
    let mut g = cfg.vcm_gain / ((s + wr) * (s + wr));
    for m in modes {
        let w = 2.0 * PI * m.freq_hz;
        g += m.gain * cfg.vcm_gain / (s * s + 2.0 * m.zeta * w * s + w * w);
    }
    g * delay(f, cfg)
}

fn pzt_response(f: f64, cfg: &BenchConfig, mode: &ModeSpec) -> Complex64 {
    second_order(f, mode.freq_hz, mode.zeta) * mode.gain * delay(f, cfg)
}

fn perturbed(rng: &mut ChaCha8Rng, modes: &[ModeSpec], spread: f64) -> Vec<ModeSpec> {
    modes
        .iter()
        .map(|m| {
            let r = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
            ModeSpec {
                freq_hz: m.freq_hz * (1.0 + r),
                ..*m
            }
        })
        .collect()
}

/// Mode sets actually used for each variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variants {
    pub vcm: Vec<Vec<ModeSpec>>,
    pub pzt: Vec<ModeSpec>,
}

pub fn draw_variants(cfg: &BenchConfig) -> Variants {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vcm = (0..cfg.n_vcm_variants)
        .map(|_| perturbed(&mut rng, &cfg.vcm_modes, cfg.perturbation))
        .collect();
    let pzt = (0..cfg.n_pzt_variants)
        .map(|_| perturbed(&mut rng, &[cfg.pzt_mode], cfg.perturbation)[0])
        .collect();
    Variants { vcm, pzt }
}

/// Cases `case1 .. case{n_vcm * n_pzt}`, VCM variant major.
pub fn gen_plants(cfg: &BenchConfig) -> Result<PlantSet> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let v = draw_variants(cfg);
    let mut cases = Vec::new();
    for vm in &v.vcm {
        for pm in &v.pzt {
            let p_cv = ComplexResponse::from_fn(grid.clone(), |_, f| vcm_response(f, cfg, vm))?;
            let p_cp = ComplexResponse::from_fn(grid.clone(), |_, f| pzt_response(f, cfg, pm))?;
            cases.push(PlantCase::new(format!("case{}", cases.len() + 1), p_cv, p_cp)?);
        }
    }
    PlantSet::new(cases)
}

fn unit_peak(v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().copied().fold(0.0, f64::max);
    v.into_iter().map(|x| x / m).collect()
}

const BUMP_GAIN: f64 = 3.981_071_705_534_973; // +12 dB

fn bump(f: f64, freq_hz: f64) -> f64 {
    1.0 + (BUMP_GAIN - 1.0) * band(f, freq_hz, 0.05).norm()
}

/// Unit-peak, zero-phase shapes of `D_p` and `D_f`.
pub fn gen_spectra(cfg: &BenchConfig) -> Result<(ComplexResponse, ComplexResponse)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let dp: Vec<f64> = grid
        .freqs()
        .iter()
        .map(|&f| (1.0 / Complex64::new(1.0, f / 2000.0)).norm() * bump(f, 1200.0) * bump(f, 3000.0))
        .collect();
    let df: Vec<f64> = grid
        .freqs()
        .iter()
        .map(|&f| (0.02 + band(f, 800.0, 0.5).norm()) * bump(f, 2400.0))
        .collect();
    let real = |v: Vec<f64>| -> Result<ComplexResponse> {
        ComplexResponse::new(grid.clone(), unit_peak(v).into_iter().map(|x| Complex64::new(x, 0.0)).collect())
    };
    Ok((real(dp)?, real(df)?))
}

/// Spectra in physical units: `D_p` peaks at `dp_peak_m`, and `D_f` is
/// scaled so that `|P_cv D_f|` on the unperturbed plant peaks at
/// `df_rel * dp_peak_m`.
pub fn scaled_spectra(cfg: &BenchConfig) -> Result<(ComplexResponse, ComplexResponse, f64)> {
    let (dp, df) = gen_spectra(cfg)?;
    let grid = cfg.grid()?;
    let peak = grid
        .freqs()
        .iter()
        .zip(df.values())
        .map(|(&f, d)| (vcm_response(f, cfg, &cfg.vcm_modes) * d).norm())
        .fold(0.0, f64::max);
    let df_gain = cfg.df_rel * cfg.dp_peak_m / peak;
    let scale = |r: &ComplexResponse, s: f64| ComplexResponse::new(grid.clone(), r.values().iter().map(|v| v * s).collect());
    Ok((scale(&dp, cfg.dp_peak_m)?, scale(&df, df_gain)?, df_gain))
}

/// `1 / max(s_floor, min(2, f / bw))`
pub fn sensitivity_weight(f: f64, bw: f64, s_floor: f64) -> f64 {
    1.0 / s_floor.max((f / bw).min(2.0))
}

/// `1 + 9 max_i |B_i(f)|` with `B_i` a unit-peak band at mode `i`.
pub fn input_weight(f: f64, modes: &[ModeSpec]) -> f64 {
    let b = modes.iter().map(|m| band(f, m.freq_hz, 0.1).norm()).fold(0.0, f64::max);
    1.0 + 9.0 * b
}

pub fn gen_weights(cfg: &BenchConfig, target_bw_hz: f64) -> Result<WeightSet> {
    let mut c = cfg.clone();
    c.target_bw_hz = target_bw_hz;
    c.validate()?;
    let grid = c.grid()?;
    let curve = |h: &dyn Fn(f64) -> f64| WeightCurve::new(grid.clone(), grid.freqs().iter().map(|&f| h(f)).collect());
    let ws = curve(&|f| sensitivity_weight(f, target_bw_hz, c.s_floor))?;
    let wu = curve(&|f| input_weight(f, &c.vcm_modes))?;
    Ok(WeightSet {
        s_vcm: Some(ws.clone()),
        s_dsa: Some(ws),
        u_vcm: Some(wu.clone()),
        u_dsa: Some(wu),
    })
}

/// Everything `gen-bench` writes, with the parameters behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: BenchConfig,
    pub variants: Variants,
    /// Factor applied to the unit-peak `D_f` shape.
    pub df_gain: f64,
    pub cases: Vec<String>,
    pub files: Vec<String>,
}

/// Synthesis spec on the generated benchmark with the default stroke limit
/// of 50 nm under the three-sigma reading.
pub fn bench_spec(cfg: &BenchConfig, order: usize) -> Result<SynthesisSpec> {
    let (dp, df, _) = scaled_spectra(cfg)?;
    Ok(SynthesisSpec {
        plants: gen_plants(cfg)?,
        order,
        weights: gen_weights(cfg, cfg.target_bw_hz)?,
        dp,
        df,
        stroke: StrokeLimit {
            limit_m: 50e-9,
            interpretation: StrokeInterpretation::ThreeSigma,
        },
        eps_margin: DEFAULT_EPS_MARGIN,
        n_iter: DEFAULT_N_ITER,
        conv_tol: DEFAULT_CONV_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_gives_identical_cases() {
        let cfg = BenchConfig {
            perturbation: 0.0,
            ..Default::default()
        };
        let set = gen_plants(&cfg).unwrap();
        assert_eq!(set.len(), 9);
        for c in set.cases() {
            assert_eq!(c.p_cv.values(), set.cases()[0].p_cv.values());
            assert_eq!(c.p_cp.values(), set.cases()[0].p_cp.values());
        }
    }

    #[test]
    fn same_seed_same_plants_and_variants_differ() {
        let cfg = BenchConfig::default();
        assert_eq!(gen_plants(&cfg).unwrap(), gen_plants(&cfg).unwrap());
        let set = gen_plants(&cfg).unwrap();
        assert_ne!(set.cases()[0].p_cv.values(), set.cases()[3].p_cv.values());
        assert_ne!(set.cases()[0].p_cp.values(), set.cases()[1].p_cp.values());
        let other = gen_plants(&BenchConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(other, set);
    }

    #[test]
    fn rigid_body_slope() {
        let cfg = BenchConfig::default();
        // between pivot and first mode the rigid body falls 40 dB per decade
        let g = |f: f64| vcm_response(f, &cfg, &cfg.vcm_modes).norm();
        let slope = 20.0 * (g(1000.0) / g(100.0)).log10();
        assert!((slope + 40.0).abs() < 1.0, "{slope}");
        let ratio = g(10.0) / g(10_000.0);
        assert!(ratio > 1e5, "{ratio}");
    }

    #[test]
    fn spectra_shapes() {
        let cfg = BenchConfig::default();
        let (dp, df) = gen_spectra(&cfg).unwrap();
        let grid = cfg.grid().unwrap();
        for r in [&dp, &df] {
            assert!(r.values().iter().all(|v| v.norm() > 0.0 && v.im == 0.0));
            let peak = r.magnitudes().into_iter().fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-15);
        }
        let m = dp.magnitudes();
        let k = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
        let f = grid.freqs()[k];
        assert!((1000.0..=3500.0).contains(&f), "{f}");
        assert_eq!(gen_spectra(&cfg).unwrap(), (dp, df));
    }

    #[test]
    fn weight_templates() {
        let cfg = BenchConfig::default();
        let w = gen_weights(&cfg, 600.0).unwrap();
        let grid = cfg.grid().unwrap();
        let s = w.s_vcm.as_ref().unwrap().magnitudes();
        for (k, &f) in grid.freqs().iter().enumerate() {
            if f >= 1200.0 {
                assert_eq!(1.0 / s[k], 2.0);
            }
        }
        assert!((1.0 / s[0] - cfg.s_floor).abs() < 1e-18);
        let u = w.u_vcm.as_ref().unwrap().magnitudes();
        let step = grid.freqs()[1];
        for m in &cfg.vcm_modes {
            // local maximum within a window around the mode
            let near: Vec<usize> = (0..u.len()).filter(|&k| (grid.freqs()[k] - m.freq_hz).abs() < 1000.0).collect();
            let k = *near.iter().max_by(|&&a, &&b| u[a].total_cmp(&u[b])).unwrap();
            assert!((grid.freqs()[k] - m.freq_hz).abs() <= step, "{} vs {}", grid.freqs()[k], m.freq_hz);
        }
        assert!(u.iter().chain(s).all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(BenchConfig {
            perturbation: 0.2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BenchConfig {
            n_vcm_variants: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(gen_weights(&BenchConfig::default(), 7000.0).is_err());
    }
}
