//! Conic rows of the synthesis problems, affine in the controller
//! coefficients `theta = [x_vcm.., x_pzt.., y..]`.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;

use super::quadrature::QuadratureWeights;
use super::spec::{SynthesisSpec, HINF_CHANNELS};
use crate::conic::{AffineExpr, ConeKind, ConicProblem};
use crate::error::{Error, Result};
use crate::freqdata::PlantCase;
use crate::polysys::{loop_point, param_count, ClosedLoopChannel, Controller, LoopConfig};

/// Placement of `theta` among the problem variables. Column `offset + j`
/// holds `theta_j / scale_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVars {
    pub offset: usize,
    pub order: usize,
    pub scale: Vec<f64>,
}

impl ThetaVars {
    pub fn new(offset: usize, order: usize) -> Self {
        Self {
            offset,
            order,
            scale: vec![1.0; param_count(order)],
        }
    }

    /// Allocates the columns in `prob`.
    pub fn alloc(prob: &mut ConicProblem, order: usize) -> Self {
        let r = prob.add_vars(param_count(order));
        Self::new(r.start, order)
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn theta(&self, x: &[f64]) -> Vec<f64> {
        self.scale.iter().enumerate().map(|(j, s)| s * x[self.offset + j]).collect()
    }

    /// Real part of `e` as a problem row.
    pub fn re(&self, e: &CAffine) -> AffineExpr {
        self.row(e, |c| c.re)
    }

    pub fn im(&self, e: &CAffine) -> AffineExpr {
        self.row(e, |c| c.im)
    }

    fn row(&self, e: &CAffine, part: impl Fn(Complex64) -> f64) -> AffineExpr {
        let mut out = AffineExpr::constant(part(e.c));
        for (j, a) in e.a.iter().enumerate() {
            let v = part(*a);
            if v != 0.0 {
                out.add_term(self.offset + j, v * self.scale[j]);
            }
        }
        out
    }

    pub fn real_row(&self, e: &RealAffine) -> AffineExpr {
        let mut out = AffineExpr::constant(e.c);
        for (j, &v) in e.a.iter().enumerate() {
            if v != 0.0 {
                out.add_term(self.offset + j, v * self.scale[j]);
            }
        }
        out
    }
}

/// `c + sum_j a_j theta_j` with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CAffine {
    pub c: Complex64,
    pub a: Vec<Complex64>,
}

impl CAffine {
    fn zero(n: usize) -> Self {
        Self {
            c: Complex64::new(0.0, 0.0),
            a: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            c: self.c * s,
            a: self.a.iter().map(|v| v * s).collect(),
        }
    }

    fn axpy(&mut self, s: Complex64, other: &CAffine) {
        self.c += s * other.c;
        for (a, b) in self.a.iter_mut().zip(&other.a) {
            *a += s * b;
        }
    }

    pub fn eval(&self, theta: &[f64]) -> Complex64 {
        self.c + self.a.iter().zip(theta).map(|(a, t)| a * t).sum::<Complex64>()
    }
}

/// `c + sum_j a_j theta_j` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RealAffine {
    pub c: f64,
    pub a: Vec<f64>,
}

impl RealAffine {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.c + self.a.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            c: self.c * s,
            a: self.a.iter().map(|v| v * s).collect(),
        }
    }
}

/// Causal-form loop polynomials at one grid point as affine maps of `theta`.
#[derive(Debug, Clone)]
pub struct LoopAffine {
    pub x1: CAffine,
    pub x2: CAffine,
    pub y: CAffine,
    /// `Y + P_cv X1 + P_cp X2`
    pub p: CAffine,
    pub p_cv: Complex64,
    pub p_cp: Complex64,
}

impl LoopAffine {
    pub fn numerator(&self, ch: ClosedLoopChannel) -> CAffine {
        match ch {
            ClosedLoopChannel::SDe => self.y.clone(),
            ClosedLoopChannel::UdUvcm => self.x1.clone(),
            ClosedLoopChannel::UdUpzt => self.x2.clone(),
            ClosedLoopChannel::YdYpzt => self.x2.scale(self.p_cp),
        }
    }
}

pub fn loop_affine(order: usize, plant: &PlantCase, cfg: LoopConfig, idx: usize) -> LoopAffine {
    let n = param_count(order);
    let zinv = plant.grid().z(idx).inv();
    let mut x1 = CAffine::zero(n);
    let mut x2 = CAffine::zero(n);
    let mut y = CAffine::zero(n);
    // z^-p z^(p-i) = z^-i for numerator coefficient i
    let mut pw = Complex64::new(1.0, 0.0);
    for i in 0..=order {
        x1.a[i] = pw;
        x2.a[order + 1 + i] = pw;
        pw *= zinv;
    }
    y.c = Complex64::new(1.0, 0.0);
    let mut pw = zinv;
    for i in 0..order {
        y.a[2 * (order + 1) + i] = pw;
        pw *= zinv;
    }
    let p_cv = plant.p_cv.values()[idx];
    let p_cp = plant.p_cp.values()[idx] * cfg.pzt_gain();
    let mut p = y.clone();
    p.axpy(p_cv, &x1);
    p.axpy(p_cp, &x2);
    LoopAffine { x1, x2, y, p, p_cv, p_cp }
}

/// Where a cone block came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintTag {
    pub plant: usize,
    pub config: LoopConfig,
    pub channel: ClosedLoopChannel,
    pub freq: usize,
}

/// The margin subtracted from `Re P` in the H∞ rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Fixed(f64),
    /// A problem column holding a common margin `t`.
    Var(usize),
}

/// One H∞ block `(Re P - margin, Re[W T_num], Im[W T_num])` in SOC.
pub fn hinf_rows(la: &LoopAffine, ch: ClosedLoopChannel, w: f64, margin: Margin, vars: &ThetaVars) -> [AffineExpr; 3] {
    let num = la.numerator(ch).scale(Complex64::new(w, 0.0));
    let mut head = vars.re(&la.p);
    match margin {
        Margin::Fixed(e) => head.constant -= e,
        Margin::Var(col) => {
            head.add_term(col, -1.0);
        }
    }
    [head, vars.re(&num), vars.im(&num)]
}

/// All H∞ SOC blocks: 2 configs x 2 channels x N frequencies x l plants,
/// ordered plant, config, channel, frequency.
pub fn assemble_hinf(spec: &SynthesisSpec, vars: &ThetaVars, margin: Margin) -> Result<Vec<([AffineExpr; 3], ConstraintTag)>> {
    let n = spec.grid().len();
    let mut out = Vec::with_capacity(spec.plants.len() * 4 * n);
    for (i, plant) in spec.plants.cases().iter().enumerate() {
        for cfg in LoopConfig::ALL {
            let las: Vec<LoopAffine> = (0..n).map(|k| loop_affine(vars.order, plant, cfg, k)).collect();
            for ch in HINF_CHANNELS {
                let w = spec.weights.get(cfg, ch)?.magnitudes();
                for (k, la) in las.iter().enumerate() {
                    let tag = ConstraintTag {
                        plant: i,
                        config: cfg,
                        channel: ch,
                        freq: k,
                    };
                    out.push((hinf_rows(la, ch, w[k], margin, vars), tag));
                }
            }
        }
    }
    Ok(out)
}

/// Taylor point of `|Y + G X|^2` at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub p_c: Complex64,
    /// `2 Re[conj(P_c) P(theta)] - |P_c|^2`
    pub q: RealAffine,
}

pub fn linearize_denominator(k_c: &Controller, plant: &PlantCase, cfg: LoopConfig, idx: usize) -> Result<Linearization> {
    let la = loop_affine(k_c.order(), plant, cfg, idx);
    let p_c = loop_point(k_c, plant, cfg, idx).p;
    if !(p_c.norm() >= 1e-12) {
        return Err(Error::SingularDenominator {
            freq_hz: plant.grid().freqs()[idx],
        });
    }
    let w = p_c.conj() * 2.0;
    let q = RealAffine {
        c: (w * la.p.c).re - p_c.norm_sqr(),
        a: la.p.a.iter().map(|a| (w * a).re).collect(),
    };
    Ok(Linearization { p_c, q })
}

/// Slack columns and blocks of one H2 assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct H2Part {
    /// Per `(plant, freq)`, plant-major: slacks on the `D_p` and `D_f` terms.
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub blocks: Vec<usize>,
    pub tags: Vec<ConstraintTag>,
}

/// Linear functional `(1/l) sum_i sum_k tau_k (a_ik + b_ik)` over H2 slacks.
pub fn h2_average(part: &H2Part, tau: &QuadratureWeights, n_plants: usize) -> Vec<(usize, f64)> {
    let n = tau.tau.len();
    let mut out = Vec::with_capacity(2 * part.first.len());
    for (idx, (&a, &b)) in part.first.iter().zip(&part.second).enumerate() {
        let w = tau.tau[idx % n] / n_plants as f64;
        out.push((a, w));
        out.push((b, w));
    }
    out
}

/// Shared pieces of the H2 rows. Disturbances enter divided by `d_scale`,
/// so slacks are in units of `d_scale^2`.
pub struct H2Context<'a> {
    pub spec: &'a SynthesisSpec,
    pub vars: &'a ThetaVars,
    pub k_c: &'a Controller,
    pub d_scale: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum H2Kind {
    Stroke,
    Objective,
}

/// `(Gamma, q / |P_c|^2, sqrt2 Re b / |P_c|, sqrt2 Im b / |P_c|)` in RSOC; the
/// scaling leaves the cone condition `Gamma q >= |b|^2` unchanged.
fn rsoc_rows(gamma: usize, lin: &Linearization, b: &CAffine, vars: &ThetaVars) -> [AffineExpr; 4] {
    let m = lin.p_c.norm();
    let q = lin.q.scale(1.0 / (m * m));
    let b = b.scale(Complex64::new(SQRT_2 / m, 0.0));
    [AffineExpr::var(gamma), vars.real_row(&q), vars.re(&b), vars.im(&b)]
}

fn assemble_h2(ctx: &H2Context, prob: &mut ConicProblem, kind: H2Kind) -> Result<H2Part> {
    let spec = ctx.spec;
    let n = spec.grid().len();
    let dp = spec.dp.values();
    let df = spec.df.values();
    let mut part = H2Part {
        first: Vec::new(),
        second: Vec::new(),
        blocks: Vec::new(),
        tags: Vec::new(),
    };
    let channel = match kind {
        H2Kind::Stroke => ClosedLoopChannel::YdYpzt,
        H2Kind::Objective => ClosedLoopChannel::SDe,
    };
    for (i, plant) in spec.plants.cases().iter().enumerate() {
        for k in 0..n {
            let lin = linearize_denominator(ctx.k_c, plant, LoopConfig::Dsa, k).map_err(|e| match e {
                Error::SingularDenominator { .. } => Error::Invariant(format!(
                    "linearization point is singular for plant {} at {} Hz",
                    plant.id,
                    spec.grid().freqs()[k]
                )),
                e => e,
            })?;
            let la = loop_affine(ctx.vars.order, plant, LoopConfig::Dsa, k);
            let num = la.numerator(channel);
            let d1 = dp[k] / ctx.d_scale;
            let d2 = la.p_cv * df[k] / ctx.d_scale;
            let tag = ConstraintTag {
                plant: i,
                config: LoopConfig::Dsa,
                channel,
                freq: k,
            };
            for (slot, d) in [(0, d1), (1, d2)] {
                let g = prob.add_var();
                let rows = rsoc_rows(g, &lin, &num.scale(d), ctx.vars);
                part.blocks.push(prob.add_block(ConeKind::Rsoc, &rows));
                part.tags.push(tag);
                if slot == 0 {
                    part.first.push(g);
                } else {
                    part.second.push(g);
                }
            }
        }
    }
    Ok(part)
}

/// Stroke slacks `Gamma, Lambda` with `b = P_cp X2 D_p` and
/// `b = P_cp X2 P_cv D_f`, plus the budget row
/// `(1/l) sum tau (Gamma + Lambda) <= budget`, written normalized as
/// `1 - (...) / budget >= 0`. `budget` is in units of `d_scale^2`.
pub fn assemble_h2_stroke(ctx: &H2Context, tau: &QuadratureWeights, budget: f64, prob: &mut ConicProblem) -> Result<(H2Part, usize)> {
    let part = assemble_h2(ctx, prob, H2Kind::Stroke)?;
    let mut row = AffineExpr::constant(1.0);
    for (j, w) in h2_average(&part, tau, ctx.spec.plants.len()) {
        row.add_term(j, -w / budget);
    }
    let idx = prob.add_block(ConeKind::Nonneg, &[row]);
    Ok((part, idx))
}

/// Objective slacks `Gamma_S, Lambda_S` with `b = Y D_p` and `b = Y P_cv D_f`;
/// adds `(weight / l) sum tau (Gamma_S + Lambda_S)` to the objective.
pub fn assemble_h2_objective(ctx: &H2Context, tau: &QuadratureWeights, weight: f64, prob: &mut ConicProblem) -> Result<H2Part> {
    let part = assemble_h2(ctx, prob, H2Kind::Objective)?;
    for (j, w) in h2_average(&part, tau, ctx.spec.plants.len()) {
        prob.objective[j] += weight * w;
    }
    Ok(part)
}
