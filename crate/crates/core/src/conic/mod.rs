//! Conic programs over the nonnegative orthant and (rotated) second-order
//! cones, with an embedded interior-point solver.

mod cones;
mod dense;
mod dump;
mod ipm;
mod kkt;
mod problem;

pub use cones::{in_rsoc, in_soc, rotate_point, rsoc_to_soc};
pub use dump::{parse_dump, write_dump};
pub use problem::{
    AffineExpr, ConeBlock, ConeKind, ConicProblem, ConicSolution, SolveStatus, SparseRow, ToleranceSet,
};

/// Solves `min c^T x` subject to the problem's equalities and cone blocks.
///
/// The problem is expected to satisfy [`ConicProblem::validate`]; malformed
/// input yields `NUMERICAL`.
pub fn solve(prob: &ConicProblem, tol: &ToleranceSet) -> ConicSolution {
    if prob.validate().is_err() {
        return ConicSolution {
            status: SolveStatus::Numerical,
            x: vec![0.0; prob.n_vars],
            y: vec![0.0; prob.eq_rows.len()],
            s: Vec::new(),
            z: Vec::new(),
            primal_obj: f64::NAN,
            dual_obj: f64::NAN,
            iterations: 0,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            complementarity: f64::NAN,
        };
    }
    ipm::solve(prob, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> ToleranceSet {
        ToleranceSet::default()
    }

    #[test]
    fn norm_of_three_four() {
        let mut p = ConicProblem::new(1);
        p.set_cost(0, 1.0);
        p.add_block(ConeKind::Soc, &[AffineExpr::var(0), AffineExpr::constant(3.0), AffineExpr::constant(4.0)]);
        let sol = solve(&p, &tol());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-7, "{}", sol.x[0]);
    }

    #[test]
    fn shifted_nonneg_bound() {
        let mut p = ConicProblem::new(1);
        p.set_cost(0, 1.0);
        p.add_block(ConeKind::Nonneg, &[AffineExpr::var(0).with_constant(-1.0)]);
        let sol = solve(&p, &tol());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn empty_feasible_set_is_detected() {
        let mut p = ConicProblem::new(1);
        p.set_cost(0, 1.0);
        p.add_block(ConeKind::Nonneg, &[AffineExpr::var(0).with_constant(-1.0)]);
        p.add_block(ConeKind::Nonneg, &[AffineExpr::term(0, -1.0)]);
        let sol = solve(&p, &tol());
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
        // certificate: F^T z = 0, g^T z = -1, z >= 0
        let z: Vec<f64> = sol.z.iter().map(|b| b[0]).collect();
        assert!(z.iter().all(|&v| v >= -1e-9));
        assert!((z[0] - z[1]).abs() < 1e-7);
        assert!((-z[0] - (-1.0)).abs() < 1e-6);
    }

    #[test]
    fn unbounded_objective_is_detected() {
        let mut p = ConicProblem::new(1);
        p.set_cost(0, -1.0);
        p.add_block(ConeKind::Nonneg, &[AffineExpr::var(0)]);
        let sol = solve(&p, &tol());
        assert_eq!(sol.status, SolveStatus::DualInfeasible);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rotated_cone_with_equality() {
        // min u + v  s.t. (u, v, 1) in RSOC, u = 2 v  ->  2 v^2 * 2 >= 1, v = 1/2
        let mut p = ConicProblem::new(2);
        p.objective = vec![1.0, 1.0];
        p.add_equality(&[(0, 1.0), (1, -2.0)], 0.0);
        p.add_block(ConeKind::Rsoc, &[AffineExpr::var(0), AffineExpr::var(1), AffineExpr::constant(1.0)]);
        let sol = solve(&p, &tol());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[1] - 0.5).abs() < 1e-7, "{:?}", sol.x);
        assert!((sol.primal_obj - 1.5).abs() < 1e-7);
    }

    #[test]
    fn invalid_problem_is_numerical() {
        let mut p = ConicProblem::new(1);
        p.add_block(ConeKind::Soc, &[AffineExpr::var(0)]);
        assert_eq!(solve(&p, &tol()).status, SolveStatus::Numerical);
    }
}
