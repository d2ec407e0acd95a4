//! Fixed-order mixed H2/H∞ synthesis by a sequence of second-order cone
//! programs.

mod assemble;
mod quadrature;
mod spec;

use serde::{Deserialize, Serialize};

pub use assemble::{
    assemble_h2_objective, assemble_h2_stroke, assemble_hinf, h2_average, hinf_rows, linearize_denominator,
    loop_affine, CAffine, ConstraintTag, H2Context, H2Part, Linearization, LoopAffine, Margin, RealAffine, ThetaVars,
};
pub use quadrature::{h2_of, quadrature, QuadratureWeights};
pub use spec::{
    StrokeInterpretation, StrokeLimit, SynthesisSpec, WeightSet, DEFAULT_CONV_TOL, DEFAULT_EPS_MARGIN,
    DEFAULT_N_ITER, HINF_CHANNELS,
};

use crate::conic::{self, AffineExpr, ConeKind, ConicProblem, ConicSolution, SolveStatus, ToleranceSet};
use crate::error::{Error, InfeasibleInfo, Result};
use crate::freqdata::PlantCase;
use crate::polysys::{
    closed_loop, loop_point, param_count, positivity_margin, ClosedLoopChannel, Controller, ControllerJson,
    LoopConfig,
};
use quadrature::weighted_energy;

pub const UNSTABLE_CERTIFICATE: &str = "UNSTABLE_CERTIFICATE";
pub const OVERFIT_RISK: &str = "OVERFIT_RISK";

/// The four H2 terms of one plant in the dual-stage loop, in m^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Terms {
    /// `||S D_p||^2`
    pub s_dp: f64,
    /// `||S P_cv D_f||^2`
    pub s_df: f64,
    /// `||Y_pzt D_p||^2`
    pub y_dp: f64,
    /// `||Y_pzt P_cv D_f||^2`
    pub y_df: f64,
}

impl H2Terms {
    pub fn objective(&self) -> f64 {
        self.s_dp + self.s_df
    }

    pub fn stroke(&self) -> f64 {
        self.y_dp + self.y_df
    }
}

/// H2 terms in the dual-stage loop, the configuration the design targets.
pub fn h2_terms(k: &Controller, spec: &SynthesisSpec, plant: &PlantCase, tau: &QuadratureWeights) -> Result<H2Terms> {
    h2_terms_in(k, spec, plant, LoopConfig::Dsa, tau)
}

pub fn h2_terms_in(
    k: &Controller,
    spec: &SynthesisSpec,
    plant: &PlantCase,
    cfg: LoopConfig,
    tau: &QuadratureWeights,
) -> Result<H2Terms> {
    let s = closed_loop(k, plant, cfg, ClosedLoopChannel::SDe)?;
    let y = closed_loop(k, plant, cfg, ClosedLoopChannel::YdYpzt)?;
    let dp = spec.dp.values();
    let dfv: Vec<_> = plant.p_cv.values().iter().zip(spec.df.values()).map(|(a, b)| a * b).collect();
    let s = s.values();
    let y = y.values();
    Ok(H2Terms {
        s_dp: weighted_energy(tau, s.iter().zip(dp).map(|(a, b)| a * b)),
        s_df: weighted_energy(tau, s.iter().zip(&dfv).map(|(a, b)| a * b)),
        y_dp: weighted_energy(tau, y.iter().zip(dp).map(|(a, b)| a * b)),
        y_df: weighted_energy(tau, y.iter().zip(&dfv).map(|(a, b)| a * b)),
    })
}

/// Plant averages of the objective and stroke terms, in m^2.
pub fn h2_averages(k: &Controller, spec: &SynthesisSpec, tau: &QuadratureWeights) -> Result<(f64, f64)> {
    let mut j = 0.0;
    let mut s = 0.0;
    for plant in spec.plants.cases() {
        let t = h2_terms(k, spec, plant, tau)?;
        j += t.objective();
        s += t.stroke();
    }
    let l = spec.plants.len() as f64;
    Ok((j / l, s / l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub plant: String,
    pub config: LoopConfig,
    pub channel: ClosedLoopChannel,
    pub freq_hz: f64,
    /// `(Re P - |W T_num|) / |P|`; nonnegative iff the H∞ row holds.
    pub margin: f64,
}

pub fn audit(k: &Controller, spec: &SynthesisSpec) -> Result<Vec<AuditRow>> {
    let grid = spec.grid();
    let mut rows = Vec::with_capacity(spec.plants.len() * 4 * grid.len());
    for plant in spec.plants.cases() {
        for cfg in LoopConfig::ALL {
            for ch in HINF_CHANNELS {
                let w = spec.weights.get(cfg, ch)?.magnitudes();
                for (idx, &f) in grid.freqs().iter().enumerate() {
                    let lp = loop_point(k, plant, cfg, idx);
                    let num = match ch {
                        ClosedLoopChannel::SDe => lp.y,
                        _ => lp.x1,
                    };
                    let m = lp.p.norm();
                    let margin = if m > 0.0 {
                        (lp.p.re - w[idx] * num.norm()) / m
                    } else {
                        -1.0
                    };
                    rows.push(AuditRow {
                        plant: plant.id.clone(),
                        config: cfg,
                        channel: ch,
                        freq_hz: f,
                        margin,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn format_audit_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from("plant,config,channel,freq_hz,margin\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{:e}\n", r.plant, r.config, r.channel, r.freq_hz, r.margin));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl SolveStats {
    fn of(sol: &ConicSolution) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            primal_obj: sol.primal_obj,
            dual_obj: sol.dual_obj,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
        }
    }
}

/// One pass of the sequential loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub solver: SolveStats,
    /// Objective value of the solved program, in m^2.
    pub objective_reported: f64,
    /// Stroke budget row value at the solution, in m^2.
    pub budget_reported: f64,
    /// Stroke budget recomputed from the new controller, in m^2.
    pub budget_true: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub controller: Controller,
    /// `J_0 .. J_n`, evaluated directly from each controller, in m^2.
    pub objective_trace: Vec<f64>,
    pub audit: Vec<AuditRow>,
    /// Attained average stroke variance of the final controller, in m^2.
    pub h2_budget_used: f64,
    pub h2_budget_limit: f64,
    /// Uniform margin `t` reached by the initial design.
    pub initial_margin: f64,
    pub initial_solver: SolveStats,
    pub iterations: Vec<IterationRecord>,
    /// Minimum positivity margin per plant and configuration.
    pub positivity: Vec<(String, LoopConfig, f64)>,
    pub flags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PositivityJson {
    plant: String,
    config: LoopConfig,
    margin: f64,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    controller: ControllerJson,
    objective_trace: Vec<f64>,
    h2_budget_used: f64,
    h2_budget_limit: f64,
    initial_margin: f64,
    initial_solver: SolveStats,
    iterations: Vec<IterationRecord>,
    positivity: Vec<PositivityJson>,
    min_audit_margin: f64,
    audit_rows: usize,
    flags: Vec<String>,
}

impl DesignReport {
    pub fn min_audit_margin(&self) -> f64 {
        self.audit.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn is_flagged(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// JSON summary; the audit itself goes to CSV.
    pub fn to_json(&self) -> String {
        let doc = ReportJson {
            controller: self.controller.to_json(),
            objective_trace: self.objective_trace.clone(),
            h2_budget_used: self.h2_budget_used,
            h2_budget_limit: self.h2_budget_limit,
            initial_margin: self.initial_margin,
            initial_solver: self.initial_solver.clone(),
            iterations: self.iterations.clone(),
            positivity: self
                .positivity
                .iter()
                .map(|(p, c, m)| PositivityJson {
                    plant: p.clone(),
                    config: *c,
                    margin: *m,
                })
                .collect(),
            min_audit_margin: self.min_audit_margin(),
            audit_rows: self.audit.len(),
            flags: self.flags.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

fn solver_tolerances() -> ToleranceSet {
    ToleranceSet::default()
}

/// Worst residual and relative gap a stalled solve may have and still be
/// used. Every H∞ row is re-checked by the audit afterwards.
pub const REDUCED_ACCURACY: f64 = 1e-6;

fn usable(sol: &ConicSolution) -> bool {
    let scale = 1f64.max(sol.primal_obj.abs()).max(sol.dual_obj.abs());
    sol.primal_residual <= REDUCED_ACCURACY
        && sol.dual_residual <= REDUCED_ACCURACY
        && (sol.primal_obj - sol.dual_obj).abs() <= REDUCED_ACCURACY * scale
}

/// A problem under construction with a tag per block.
struct Build {
    prob: ConicProblem,
    vars: ThetaVars,
    tags: Vec<Option<ConstraintTag>>,
}

impl Build {
    fn new(order: usize) -> Self {
        let mut prob = ConicProblem::new(0);
        let vars = ThetaVars::alloc(&mut prob, order);
        Self {
            prob,
            vars,
            tags: Vec::new(),
        }
    }

    fn block(&mut self, kind: ConeKind, rows: &[AffineExpr], tag: Option<ConstraintTag>) {
        self.prob.add_block(kind, rows);
        self.tags.push(tag);
    }

    fn sync_tags(&mut self) {
        self.tags.resize(self.prob.blocks.len(), None);
    }

    /// Coefficients that no block touches are pinned to zero.
    fn pin_unused(&mut self) {
        let mut used = vec![false; self.prob.n_vars];
        for b in &self.prob.blocks {
            let w = b.width();
            for (c, &j) in b.cols.iter().enumerate() {
                if (0..b.dim()).any(|r| b.f[r * w + c] != 0.0) {
                    used[j] = true;
                }
            }
        }
        for j in 0..self.vars.len() {
            let col = self.vars.offset + j;
            if !used[col] {
                self.prob.add_equality(&[(col, 1.0)], 0.0);
            }
        }
    }

    fn infeasible(&self, sol: &ConicSolution, spec: &SynthesisSpec, iteration: usize) -> Error {
        let best = self
            .tags
            .iter()
            .zip(&sol.z)
            .filter_map(|(t, z)| t.map(|t| (t, z.iter().map(|v| v * v).sum::<f64>())))
            .fold(None::<(ConstraintTag, f64)>, |acc, (t, w)| match acc {
                Some((_, bw)) if bw >= w => acc,
                _ => Some((t, w)),
            });
        match best {
            Some((t, _)) => Error::Infeasible(InfeasibleInfo {
                iteration,
                plant: spec.plants.cases()[t.plant].id.clone(),
                config: t.config.as_str().into(),
                channel: t.channel.as_str().into(),
                freq_hz: spec.grid().freqs()[t.freq],
            }),
            None => Error::Solver {
                status: sol.status,
                context: format!("iteration {iteration}: infeasible without a located constraint"),
            },
        }
    }

    fn solve(&self, spec: &SynthesisSpec, iteration: usize) -> Result<ConicSolution> {
        let sol = conic::solve(&self.prob, &solver_tolerances());
        match sol.status {
            SolveStatus::Optimal => Ok(sol),
            SolveStatus::Numerical | SolveStatus::MaxIter if usable(&sol) => Ok(sol),
            SolveStatus::PrimalInfeasible => Err(self.infeasible(&sol, spec, iteration)),
            status => Err(Error::Solver {
                status,
                context: if iteration == 0 {
                    "initial H∞ design".into()
                } else {
                    format!("synthesis iteration {iteration}")
                },
            }),
        }
    }

    fn controller(&self, sol: &ConicSolution, spec: &SynthesisSpec) -> Result<Controller> {
        Controller::from_params(spec.grid().ts(), spec.order, &self.vars.theta(&sol.x))
    }
}

/// Largest disturbance magnitude entering the H2 rows; 0 if there is none.
fn disturbance_scale(spec: &SynthesisSpec) -> f64 {
    let mut m: f64 = spec.dp.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for plant in spec.plants.cases() {
        for (g, d) in plant.p_cv.values().iter().zip(spec.df.values()) {
            m = m.max((g * d).norm());
        }
    }
    m
}

/// Weight on the PZT input in the initial design. It keeps `|X_pzt / P|`
/// small enough that the stroke budget holds at `K_0` whatever the phase of
/// the PZT path, and bounds `X_pzt`, which the H∞ rows alone leave free.
fn pzt_input_weight(spec: &SynthesisSpec, tau: &QuadratureWeights) -> f64 {
    let mut gain: f64 = 0.0;
    let mut power = 0.0;
    for plant in spec.plants.cases() {
        gain = plant.p_cp.values().iter().map(|v| v.norm()).fold(gain, f64::max);
        let dfv = plant.p_cv.values().iter().zip(spec.df.values()).map(|(a, b)| a * b);
        power += weighted_energy(tau, spec.dp.values().iter().copied()) + weighted_energy(tau, dfv);
    }
    power /= spec.plants.len() as f64;
    let ratio = (power / spec.stroke.variance_budget()).sqrt();
    gain * ratio.max(1.0) * 2.0
}

/// Solution of the margin-maximizing H∞ program.
#[derive(Debug, Clone)]
pub struct InitialDesign {
    pub controller: Controller,
    pub margin: f64,
    pub solver: SolveStats,
}

pub fn initial_design(spec: &SynthesisSpec) -> Result<Controller> {
    Ok(initial_design_detail(spec)?.controller)
}

/// `maximize t` subject to every H∞ row with margin `t`, `t >= eps`, and
/// `|w X_pzt| <= Re P - t` in the dual-stage loop.
pub fn initial_design_detail(spec: &SynthesisSpec) -> Result<InitialDesign> {
    spec.validate()?;
    let tau = quadrature(spec.grid());
    let mut b = Build::new(spec.order);
    let t = b.prob.add_var();
    b.prob.set_cost(t, -1.0);
    for (rows, tag) in assemble_hinf(spec, &b.vars, Margin::Var(t))? {
        b.block(ConeKind::Soc, &rows, Some(tag));
    }
    let w = pzt_input_weight(spec, &tau);
    if w > 0.0 {
        for (i, plant) in spec.plants.cases().iter().enumerate() {
            for k in 0..spec.grid().len() {
                let la = loop_affine(spec.order, plant, LoopConfig::Dsa, k);
                let rows = hinf_rows(&la, ClosedLoopChannel::UdUpzt, w, Margin::Var(t), &b.vars);
                let tag = ConstraintTag {
                    plant: i,
                    config: LoopConfig::Dsa,
                    channel: ClosedLoopChannel::UdUpzt,
                    freq: k,
                };
                b.block(ConeKind::Soc, &rows, Some(tag));
            }
        }
    }
    b.block(ConeKind::Nonneg, &[AffineExpr::var(t).with_constant(-spec.eps_margin)], None);
    b.pin_unused();
    let sol = b.solve(spec, 0)?;
    Ok(InitialDesign {
        controller: b.controller(&sol, spec)?,
        margin: sol.x[t],
        solver: SolveStats::of(&sol),
    })
}

/// One linearized H2 step about `k_c`.
fn h2_step(
    spec: &SynthesisSpec,
    k_c: &Controller,
    tau: &QuadratureWeights,
    d_scale: f64,
    j_c: f64,
    iteration: usize,
) -> Result<(Controller, IterationRecord)> {
    let mut b = Build::new(spec.order);
    for (rows, tag) in assemble_hinf(spec, &b.vars, Margin::Fixed(spec.eps_margin))? {
        b.block(ConeKind::Soc, &rows, Some(tag));
    }
    let d2 = d_scale * d_scale;
    let vars = b.vars.clone();
    let ctx = H2Context {
        spec,
        vars: &vars,
        k_c,
        d_scale,
    };
    // objective normalized by its value at the linearization point
    let weight = if j_c > 0.0 { d2 / j_c } else { 1.0 };
    let obj = assemble_h2_objective(&ctx, tau, weight, &mut b.prob)?;
    let tags_obj = obj.tags.clone();
    b.sync_tags();
    let budget = spec.stroke.variance_budget() / d2;
    let (stroke, _) = assemble_h2_stroke(&ctx, tau, budget, &mut b.prob)?;
    b.sync_tags();
    for (blk, tag) in obj.blocks.iter().zip(&tags_obj).chain(stroke.blocks.iter().zip(&stroke.tags)) {
        b.tags[*blk] = Some(*tag);
    }
    b.pin_unused();
    let sol = b.solve(spec, iteration)?;
    let k_new = b.controller(&sol, spec)?;
    let l = spec.plants.len();
    let sum = |part: &H2Part| -> f64 { h2_average(part, tau, l).iter().map(|&(j, w)| w * sol.x[j]).sum() };
    let (_, budget_true) = h2_averages(&k_new, spec, tau)?;
    let rec = IterationRecord {
        iteration,
        solver: SolveStats::of(&sol),
        objective_reported: sum(&obj) * d2,
        budget_reported: sum(&stroke) * d2,
        budget_true,
    };
    Ok((k_new, rec))
}

pub fn synthesize(spec: &SynthesisSpec) -> Result<DesignReport> {
    spec.validate()?;
    let tau = quadrature(spec.grid());
    let init = initial_design_detail(spec)?;
    let mut k = init.controller.clone();
    let d_scale = disturbance_scale(spec);
    let mut trace = Vec::with_capacity(spec.n_iter + 1);
    let mut iterations = Vec::new();
    if d_scale == 0.0 {
        trace.push(0.0);
    } else {
        trace.push(h2_averages(&k, spec, &tau)?.0);
        for it in 1..=spec.n_iter {
            let (k_new, rec) = h2_step(spec, &k, &tau, d_scale, trace[it - 1], it)?;
            k = k_new;
            iterations.push(rec);
            let j = h2_averages(&k, spec, &tau)?.0;
            trace.push(j);
            let prev = trace[it - 1];
            if (j - prev).abs() <= spec.conv_tol * prev {
                break;
            }
        }
    }
    let (_, used) = h2_averages(&k, spec, &tau)?;
    let mut positivity = Vec::new();
    let mut flags = Vec::new();
    for plant in spec.plants.cases() {
        for cfg in LoopConfig::ALL {
            let m = positivity_margin(&k, plant, cfg);
            if !(m > 0.0) && !flags.iter().any(|f| f == UNSTABLE_CERTIFICATE) {
                flags.push(UNSTABLE_CERTIFICATE.to_string());
            }
            positivity.push((plant.id.clone(), cfg, m));
        }
    }
    if param_count(spec.order) * 5 > spec.grid().len() {
        flags.push(OVERFIT_RISK.to_string());
    }
    Ok(DesignReport {
        audit: audit(&k, spec)?,
        controller: k,
        objective_trace: trace,
        h2_budget_used: used,
        h2_budget_limit: spec.stroke.variance_budget(),
        initial_margin: init.margin,
        initial_solver: init.solver,
        iterations,
        positivity,
        flags,
    })
}
