mod common;

use common::{arrow_instance, plant, planted_mix, random_kind, Planted, Support};
use ddtrack::conic::{in_rsoc, in_soc, rotate_point, solve, ConeKind, SolveStatus, ToleranceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(p: &Planted, label: &str) {
    let tol = ToleranceSet::default();
    let sol = solve(&p.prob, &tol);
    assert_eq!(sol.status, SolveStatus::Optimal, "{label}: {sol:?}");
    let rel = (sol.primal_obj - p.optimum).abs() / p.optimum.abs().max(1.0);
    assert!(rel <= 1e-6, "{label}: objective {} vs planted {} (rel {rel:e})", sol.primal_obj, p.optimum);
    let scale = 1f64.max(sol.primal_obj.abs()).max(sol.dual_obj.abs());
    assert!((sol.primal_obj - sol.dual_obj).abs() <= tol.gap * scale, "{label}: gap");
    let rows = p.prob.n_cone_rows() as f64;
    assert!(sol.complementarity / rows <= 10.0 * tol.gap * scale, "{label}: complementarity {}", sol.complementarity);
    for (blk, s) in p.prob.blocks.iter().zip(&sol.s) {
        let ok = match blk.kind {
            ConeKind::Nonneg => s.iter().all(|&v| v >= -1e-7),
            ConeKind::Soc => in_soc(s, 1e-7),
            ConeKind::Rsoc => in_rsoc(s, 1e-7),
        };
        assert!(ok, "{label}: slack leaves its cone: {s:?}");
    }
}

#[test]
fn hundred_planted_socps_recover_their_optimum() {
    for (i, p) in planted_mix(7, 100).iter().enumerate() {
        check(p, &format!("instance {i}"));
    }
}

#[test]
fn wide_budget_row_goes_through_low_rank_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..3 {
        let p = arrow_instance(&mut rng, 200, true);
        check(&p, &format!("wide {i}"));
    }
}

#[test]
fn solves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = arrow_instance(&mut rng, 30, true);
    let a = solve(&p.prob, &ToleranceSet::default());
    let b = solve(&p.prob, &ToleranceSet::default());
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x, b.x);
    assert_eq!(a.z, b.z);
}

#[test]
fn rotation_agrees_with_direct_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut members = 0;
    for _ in 0..100_000 {
        let dim = rng.random_range(3..6);
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let direct = in_rsoc(&u, 0.0);
        let rotated = rotate_point(&u);
        // skip points within rounding distance of the boundary
        let t = rotated[0];
        let r = rotated[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if (t - r).abs() < 1e-12 * (1.0 + t.abs()) {
            continue;
        }
        assert_eq!(direct, in_soc(&rotated, 0.0), "{u:?}");
        members += direct as usize;
    }
    assert!(members > 1000 && members < 99_000);
}

/// Without the pinning block the planted `x*` is generally not unique. The
/// optimal value still is, and an OPTIMAL exit must report it.
#[test]
fn degenerate_instances_never_report_a_wrong_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut optimal = 0;
    for i in 0..60 {
        let n = rng.random_range(2..8);
        let supports: Vec<Support> = (0..rng.random_range(n..n + 6))
            .map(|_| {
                let (kind, dim) = random_kind(&mut rng);
                Support {
                    kind,
                    dim,
                    cols: (0..n).collect(),
                    pin: false,
                }
            })
            .collect();
        let p = plant(&mut rng, n, &supports, 0);
        let sol = solve(&p.prob, &ToleranceSet::default());
        if sol.status == SolveStatus::Optimal {
            optimal += 1;
            let rel = (sol.primal_obj - p.optimum).abs() / p.optimum.abs().max(1.0);
            assert!(rel <= 1e-6, "instance {i}: objective {} vs planted {}", sol.primal_obj, p.optimum);
        } else {
            assert!(matches!(sol.status, SolveStatus::Numerical | SolveStatus::MaxIter), "instance {i}: {:?}", sol.status);
        }
    }
    assert!(optimal >= 50, "only {optimal} of 60 degenerate instances solved");
}
