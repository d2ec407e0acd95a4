//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddtrack::benchgen::{bench_spec, BenchConfig};
use ddtrack::conic::{in_rsoc, solve, SolveStatus, ToleranceSet};
use ddtrack::evalsim::{simulate, SimulationConfig};
use ddtrack::freqdata::{ComplexResponse, FrequencyGrid};
use ddtrack::polysys::positivity_margin;
use ddtrack::synth::{format_audit_csv, h2_of, h2_terms, quadrature, synthesize, DesignReport, SynthesisSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(n: usize, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let pass = o.pass && in_time;
    let budget = limit.map(|l| format!(" limit {:.0?}", l)).unwrap_or_default();
    println!(
        "criterion {n}: {} {} ({:.2?}{budget}{})",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took,
        if in_time { "" } else { ", over time" }
    );
    pass
}

fn min_eig(g: f64, q: f64, b: Complex64) -> f64 {
    0.5 * (g + q) - (0.25 * (g - q) * (g - q) + b.norm_sqr()).sqrt()
}

fn cone_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut disagree = 0;
    let mut skipped = 0;
    for _ in 0..100_000 {
        let g: f64 = rng.random_range(-1.0..3.0);
        let q: f64 = rng.random_range(-1.0..3.0);
        let b = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let e = min_eig(g, q, b);
        if e.abs() <= 1e-12 {
            skipped += 1;
            continue;
        }
        let point = [g, q, std::f64::consts::SQRT_2 * b.re, std::f64::consts::SQRT_2 * b.im];
        if in_rsoc(&point, 0.0) != (e >= 0.0) {
            disagree += 1;
        }
    }
    outcome(disagree == 0, format!("1e5 triples, {disagree} disagreements, {skipped} on the boundary"))
}

fn quadrature_oracle() -> Outcome {
    let n = 4096;
    let g = Arc::new(FrequencyGrid::uniform(1.0, 0.0, 0.5, n).unwrap());
    let t = ComplexResponse::from_fn(g.clone(), |k, _| 1.0 / (g.z(k) - 0.5)).unwrap();
    let d = ComplexResponse::constant(g.clone(), Complex64::new(1.0, 0.0));
    let v = h2_of(&t, &d, &quadrature(&g)).unwrap();
    let rel = (v - 4.0 / 3.0).abs() / (4.0 / 3.0);
    outcome(rel <= 1e-3, format!("||1/(z-0.5)||^2 = {v:.6}, rel error {rel:.2e}"))
}

fn solver_correctness() -> Outcome {
    let tol = ToleranceSet::default();
    let mut worst_obj: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut failures = 0;
    for p in common::planted_mix(7, 100) {
        let sol = solve(&p.prob, &tol);
        if sol.status != SolveStatus::Optimal {
            failures += 1;
            continue;
        }
        let rel = (sol.primal_obj - p.optimum).abs() / p.optimum.abs().max(1.0);
        let scale = 1f64.max(sol.primal_obj.abs()).max(sol.dual_obj.abs());
        let gap = (sol.primal_obj - sol.dual_obj).abs() / scale;
        worst_obj = worst_obj.max(rel);
        worst_gap = worst_gap.max(gap);
    }
    outcome(
        failures == 0 && worst_obj <= 1e-6 && worst_gap <= 1e-8,
        format!("100 planted SOCPs, {failures} not optimal, worst objective error {worst_obj:.1e}, worst gap {worst_gap:.1e}"),
    )
}

fn bench() -> (BenchConfig, SynthesisSpec) {
    let cfg = BenchConfig::default();
    let spec = bench_spec(&cfg, 8).unwrap();
    (cfg, spec)
}

fn conservatism(runs: &[&DesignReport]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for r in runs {
        for it in &r.iterations {
            worst = worst.max((it.budget_true - it.budget_reported) / r.h2_budget_limit);
            count += 1;
        }
    }
    outcome(
        count > 0 && worst <= 1e-8,
        format!("{count} iterates, worst (true - reported) / limit = {worst:.3e}"),
    )
}

fn end_to_end(spec: &SynthesisSpec, r: &DesignReport) -> Outcome {
    let n = spec.grid().len();
    let l = spec.plants.len();
    let rows_ok = r.audit.len() == 2 * 2 * n * l;
    let margin = r.min_audit_margin();
    let pos = spec
        .plants
        .cases()
        .iter()
        .flat_map(|p| ddtrack::polysys::LoopConfig::ALL.map(|c| positivity_margin(&r.controller, p, c)))
        .fold(f64::INFINITY, f64::min);
    let j0 = r.objective_trace[0];
    let jn = *r.objective_trace.last().unwrap();
    outcome(
        rows_ok && margin >= -1e-6 && pos > 0.0 && jn <= j0 && r.objective_trace.len() == 3,
        format!(
            "{} audit rows, min margin {margin:.2e}, min positivity {pos:.3e}, J {:.3e} -> {:.3e}",
            r.audit.len(),
            j0,
            jn
        ),
    )
}

struct SimRun {
    json: String,
    worst_rel: f64,
    avg_var: f64,
}

fn simulate_all(spec: &SynthesisSpec, r: &DesignReport) -> SimRun {
    let tau = quadrature(spec.grid());
    let cfg = SimulationConfig::default();
    let mut worst_rel: f64 = 0.0;
    let mut sum = 0.0;
    let mut metrics = Vec::new();
    for plant in spec.plants.cases() {
        let sim = simulate(&r.controller, plant, &spec.dp, &spec.df, &cfg).unwrap();
        let predicted = h2_terms(&r.controller, spec, plant, &tau).unwrap().stroke();
        worst_rel = worst_rel.max((sim.metrics.var_ycp_m2 - predicted).abs() / predicted);
        sum += sim.metrics.var_ycp_m2;
        metrics.push(sim.metrics);
    }
    SimRun {
        json: serde_json::to_string(&metrics).unwrap(),
        worst_rel,
        avg_var: sum / spec.plants.len() as f64,
    }
}

fn parseval(r: &DesignReport, s: &SimRun) -> Outcome {
    let limit = r.h2_budget_limit;
    outcome(
        s.worst_rel <= 0.05 && s.avg_var <= 1.05 * limit,
        format!(
            "worst var(y_cp) deviation {:.2}%, average var {:.3e} vs budget {:.3e}",
            100.0 * s.worst_rel,
            s.avg_var,
            limit
        ),
    )
}

fn degenerate() -> Outcome {
    let (_, mut spec) = bench();
    let g = spec.grid().clone();
    spec.dp = ComplexResponse::constant(g.clone(), Complex64::new(0.0, 0.0));
    spec.df = ComplexResponse::constant(g, Complex64::new(0.0, 0.0));
    let r = match synthesize(&spec) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("synthesis failed: {e}")),
    };
    let j_zero = r.objective_trace.iter().all(|&j| j == 0.0);
    let mut all_zero = true;
    for plant in spec.plants.cases() {
        let sim = simulate(&r.controller, plant, &spec.dp, &spec.df, &SimulationConfig::default()).unwrap();
        let m = &sim.metrics;
        all_zero &= sim.e.iter().chain(&sim.ycp).all(|&v| v == 0.0)
            && [m.sigma3_e_m, m.sigma3_e_pct, m.max_abs_ycp_m, m.var_ycp_m2, m.var_e_m2].iter().all(|&v| v == 0.0);
    }
    outcome(j_zero && all_zero, format!("J trace {:?}, simulation exactly zero: {all_zero}", r.objective_trace))
}

fn main() {
    let mut results = Vec::new();
    results.push(report(1, Some(Duration::from_secs(5)), cone_reduction));
    results.push(report(2, Some(Duration::from_secs(1)), quadrature_oracle));
    results.push(report(3, Some(Duration::from_secs(60)), solver_correctness));

    let (_, spec) = bench();
    let start = Instant::now();
    let first = synthesize(&spec);
    let synth_time = start.elapsed();
    let first = match first {
        Ok(r) => r,
        Err(e) => {
            println!("criterion 5: FAIL synthesis error: {e} ({synth_time:.2?})");
            for n in [4, 6, 8] {
                println!("criterion {n}: FAIL needs the benchmark design");
            }
            results.push(report(7, None, degenerate));
            std::process::exit(1);
        }
    };
    let second = synthesize(&spec).expect("second run");

    results.push(report(4, None, || conservatism(&[&first, &second])));
    let pass5 = {
        let o = end_to_end(&spec, &first);
        let in_time = synth_time <= Duration::from_secs(600);
        println!(
            "criterion 5: {} {} ({synth_time:.2?} limit 600s{})",
            if o.pass && in_time { "PASS" } else { "FAIL" },
            o.detail,
            if in_time { "" } else { ", over time" }
        );
        o.pass && in_time
    };
    results.push(pass5);

    let sim_a = simulate_all(&spec, &first);
    results.push(report(6, None, || parseval(&first, &sim_a)));
    results.push(report(7, None, degenerate));
    results.push(report(8, None, || {
        let sim_b = simulate_all(&spec, &second);
        let same_report = first.to_json() == second.to_json();
        let same_audit = format_audit_csv(&first.audit) == format_audit_csv(&second.audit);
        let same_sim = sim_a.json == sim_b.json;
        outcome(
            same_report && same_audit && same_sim,
            format!("report identical: {same_report}, audit identical: {same_audit}, metrics identical: {same_sim}"),
        )
    }));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
