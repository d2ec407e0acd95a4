use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use ddtrack::benchgen::{bench_spec, BenchConfig};
use ddtrack::conic::{self, in_rsoc, ToleranceSet};
use ddtrack::error::Error;
use ddtrack::freqdata::{ComplexResponse, FrequencyGrid, PlantCase, PlantSet, WeightCurve};
use ddtrack::polysys::{loop_point, Controller, LoopConfig};
use ddtrack::synth::{
    assemble_h2_objective, h2_average, h2_averages, initial_design, initial_design_detail, linearize_denominator,
    loop_affine, quadrature, synthesize, H2Context, StrokeInterpretation, StrokeLimit, SynthesisSpec, ThetaVars,
    WeightSet, OVERFIT_RISK,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// One plant with constant responses on a two-point grid.
fn scalar_spec(p_cv: Complex64, p_cp: Complex64, w_s: f64, w_u: f64, order: usize, dp: f64) -> SynthesisSpec {
    let g = Arc::new(FrequencyGrid::uniform(1e-3, 0.0, 500.0, 2).unwrap());
    let plant = PlantCase::new(
        "toy",
        ComplexResponse::constant(g.clone(), p_cv),
        ComplexResponse::constant(g.clone(), p_cp),
    )
    .unwrap();
    let ws = WeightCurve::new(g.clone(), vec![w_s; 2]).unwrap();
    let wu = WeightCurve::new(g.clone(), vec![w_u; 2]).unwrap();
    SynthesisSpec {
        plants: PlantSet::new(vec![plant]).unwrap(),
        order,
        weights: WeightSet {
            s_vcm: Some(ws.clone()),
            s_dsa: Some(ws),
            u_vcm: Some(wu.clone()),
            u_dsa: Some(wu),
        },
        dp: ComplexResponse::constant(g.clone(), c(dp, 0.0)),
        df: ComplexResponse::constant(g, c(0.0, 0.0)),
        stroke: StrokeLimit {
            limit_m: 1.0,
            interpretation: StrokeInterpretation::VarianceBound,
        },
        eps_margin: 1e-6,
        n_iter: 2,
        conv_tol: 1e-4,
    }
}

fn small_bench(points: usize) -> SynthesisSpec {
    let cfg = BenchConfig {
        n_points: points,
        ..BenchConfig::default()
    };
    bench_spec(&cfg, 8).unwrap()
}

#[test]
fn scalar_margin_maximization() {
    // rows: 1 + x - t >= 2 and 1 + x - t >= 1.5 x, balanced at x = 4/3
    let spec = scalar_spec(c(1.0, 0.0), c(0.0, 0.0), 2.0, 1.5, 0, 0.0);
    let d = initial_design_detail(&spec).unwrap();
    let theta = d.controller.params();
    let x = theta[0];
    assert!((x - 4.0 / 3.0).abs() < 1e-6, "x = {x}");
    assert!((d.margin - 1.0 / 3.0).abs() < 1e-6, "t = {}", d.margin);
    assert_eq!(theta[1], 0.0);
}

#[test]
fn unachievable_scalar_weights_are_certified() {
    // W_S = 2 needs x >= 1 while W_U = 10 needs x <= 1/9
    let spec = scalar_spec(c(1.0, 0.0), c(0.0, 0.0), 2.0, 10.0, 0, 0.0);
    let feasible = (0..=200_000).map(|i| -10.0 + i as f64 * 1e-4).any(|x: f64| {
        let re = 1.0 + x;
        re - 1e-6 >= 2.0 && re - 1e-6 >= 10.0 * x.abs()
    });
    assert!(!feasible);
    match initial_design(&spec) {
        Err(Error::Infeasible(info)) => {
            assert_eq!(info.iteration, 0);
            assert_eq!(info.plant, "toy");
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn zero_plants_are_rejected() {
    assert!(PlantSet::new(Vec::new()).is_err());
}

fn min_eig(g: f64, q: f64, b: Complex64) -> f64 {
    let m = 0.5 * (g + q);
    let r = (0.25 * (g - q) * (g - q) + b.norm_sqr()).sqrt();
    m - r
}

proptest! {
    #[test]
    fn rsoc_matches_hermitian_psd(g in -2.0f64..2.0, q in -2.0f64..2.0, br in -2.0f64..2.0, bi in -2.0f64..2.0) {
        let b = c(br, bi);
        let e = min_eig(g, q, b);
        prop_assume!(e.abs() > 1e-12);
        let point = [g, q, std::f64::consts::SQRT_2 * br, std::f64::consts::SQRT_2 * bi];
        prop_assert_eq!(in_rsoc(&point, 0.0), e >= 0.0);
    }
}

#[test]
fn rsoc_boundary_examples() {
    let r2 = std::f64::consts::SQRT_2;
    assert!(in_rsoc(&[1.0, 1.0, r2, 0.0], 1e-12));
    assert!(min_eig(1.0, 1.0, c(1.0, 0.0)).abs() < 1e-15);
    assert!(in_rsoc(&[0.5, 0.0, 0.0, 0.0], 0.0));
    assert!(!in_rsoc(&[-0.5, 1.0, 0.0, 0.0], 0.0));
}

/// Minimizes the H2 objective slacks with `theta` pinned at `k_c`.
fn pinned_objective(spec: &SynthesisSpec, k_c: &Controller, d_scale: f64) -> (f64, Vec<f64>, Vec<usize>) {
    let tau = quadrature(spec.grid());
    let mut prob = conic::ConicProblem::new(0);
    let vars = ThetaVars::alloc(&mut prob, spec.order);
    for (j, v) in k_c.params().iter().enumerate() {
        prob.add_equality(&[(vars.offset + j, 1.0)], *v);
    }
    let ctx = H2Context {
        spec,
        vars: &vars,
        k_c,
        d_scale,
    };
    let part = assemble_h2_objective(&ctx, &tau, 1.0, &mut prob).unwrap();
    let sol = conic::solve(&prob, &ToleranceSet::default());
    assert_eq!(sol.status, conic::SolveStatus::Optimal);
    let obj: f64 = h2_average(&part, &tau, spec.plants.len()).iter().map(|&(j, w)| w * sol.x[j]).sum();
    (obj * d_scale * d_scale, sol.x, part.first)
}

#[test]
fn unit_loop_gives_unit_slack() {
    // G = 0, Y = 1, D_p = 1: Gamma_S >= |Y D_p|^2 / q = 1
    let spec = scalar_spec(c(0.0, 0.0), c(0.0, 0.0), 0.5, 0.5, 0, 1.0);
    let k = Controller::zero(1e-3, 0);
    let (_, x, first) = pinned_objective(&spec, &k, 1.0);
    for j in first {
        assert!((x[j] - 1.0).abs() < 1e-7, "{}", x[j]);
    }
}

#[test]
fn pinned_objective_equals_direct_quadrature() {
    let spec = small_bench(64);
    let k = initial_design(&spec).unwrap();
    let tau = quadrature(spec.grid());
    let (direct, _) = h2_averages(&k, &spec, &tau).unwrap();
    let d = spec.dp.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (reported, _, _) = pinned_objective(&spec, &k, d);
    assert!((reported - direct).abs() <= 1e-6 * direct, "{reported} vs {direct}");
}

#[test]
fn zero_disturbance_keeps_the_initial_design() {
    let mut spec = small_bench(64);
    let g = spec.grid().clone();
    spec.dp = ComplexResponse::constant(g.clone(), c(0.0, 0.0));
    spec.df = ComplexResponse::constant(g, c(0.0, 0.0));
    let report = synthesize(&spec).unwrap();
    assert_eq!(report.objective_trace, vec![0.0]);
    assert!(report.iterations.is_empty());
    assert_eq!(report.controller, initial_design(&spec).unwrap());
    assert_eq!(report.h2_budget_used, 0.0);
}

#[test]
fn synthesis_on_small_benchmark() {
    let mut spec = small_bench(64);
    spec.n_iter = 1;
    let k0 = initial_design(&spec).unwrap();
    let report = synthesize(&spec).unwrap();
    let n = spec.grid().len();
    let l = spec.plants.len();
    assert_eq!(report.audit.len(), 2 * 2 * n * l);
    assert!(report.min_audit_margin() >= -1e-6);
    assert_eq!(report.flags, vec![OVERFIT_RISK.to_string()]);
    assert!(report.objective_trace[1] <= report.objective_trace[0]);

    let rec = &report.iterations[0];
    let limit = report.h2_budget_limit;
    assert!(rec.budget_true <= rec.budget_reported + 1e-8 * limit);
    assert!(rec.budget_reported <= limit * (1.0 + 1e-6));

    // the dropped square keeps q below |P|^2 at the new point
    let theta = report.controller.params();
    for plant in spec.plants.cases() {
        for k in 0..n {
            let lin = linearize_denominator(&k0, plant, LoopConfig::Dsa, k).unwrap();
            let la = loop_affine(spec.order, plant, LoopConfig::Dsa, k);
            let p = la.p.eval(&theta);
            let q = lin.q.eval(&theta);
            assert!(q <= p.norm_sqr() * (1.0 + 1e-12) + 1e-15, "{q} > {}", p.norm_sqr());
            let exact = lin.q.eval(&k0.params());
            let pc = loop_point(&k0, plant, LoopConfig::Dsa, k).p;
            assert!((exact - pc.norm_sqr()).abs() <= 1e-12 * pc.norm_sqr());
        }
    }
}
