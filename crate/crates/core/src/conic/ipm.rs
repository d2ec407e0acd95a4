//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! Internally the problem is `min c^T x  s.t.  G x + s = h, A x = b, s in K`
//! with `G = -F`, `h = g`. Nonnegative blocks are split into one-dimensional
//! cones and rotated cones are rewritten as second-order cones.

use super::cones::{self, soc_div, soc_max_step, soc_prod, SocScaling};
use super::dense::{dot, norm2};
use super::kkt::{EqRow, IBlock, KktSolver, Scaling};
use super::problem::{ConeKind, ConicProblem, ConicSolution, SolveStatus, ToleranceSet};

const STEP: f64 = 0.99;
const EQUILIBRATION_PASSES: usize = 10;
/// Iterations without a tenfold drop in the worst residual before giving up.
const STALL_ITERS: usize = 12;
const STALL_MERIT: f64 = 1e-5;

/// Where the rows of a user block ended up internally.
enum Origin {
    Nonneg(Vec<usize>),
    Soc(usize),
    Rsoc(usize),
}

struct Internal {
    n: usize,
    c: Vec<f64>,
    eqs: Vec<EqRow>,
    b: Vec<f64>,
    blocks: Vec<IBlock>,
    h: Vec<f64>,
    m: usize,
    origin: Vec<Origin>,
    /// Equilibration: internal `x = x_user / col[j]`, block rows scaled by
    /// `blk[i]`, equality rows by `row[i]`.
    col: Vec<f64>,
    blk: Vec<f64>,
    row: Vec<f64>,
}

impl Internal {
    fn build(prob: &ConicProblem) -> Self {
        let mut blocks = Vec::new();
        let mut origin = Vec::new();
        let mut offset = 0;
        for blk in &prob.blocks {
            match blk.kind {
                ConeKind::Nonneg => {
                    let w = blk.width();
                    let mut idx = Vec::new();
                    for r in 0..blk.dim() {
                        let row = &blk.f[r * w..(r + 1) * w];
                        let (cols, f): (Vec<usize>, Vec<f64>) =
                            blk.cols.iter().zip(row).filter(|(_, a)| **a != 0.0).map(|(&j, &a)| (j, a)).unzip();
                        idx.push(blocks.len());
                        blocks.push(IBlock {
                            soc: false,
                            cols,
                            f,
                            g: vec![blk.g[r]],
                            offset,
                        });
                        offset += 1;
                    }
                    origin.push(Origin::Nonneg(idx));
                }
                ConeKind::Soc | ConeKind::Rsoc => {
                    let (b, o) = if blk.kind == ConeKind::Soc {
                        (blk.clone(), Origin::Soc(blocks.len()))
                    } else {
                        (cones::rsoc_to_soc(blk), Origin::Rsoc(blocks.len()))
                    };
                    let dim = b.dim();
                    blocks.push(IBlock {
                        soc: true,
                        cols: b.cols,
                        f: b.f,
                        g: b.g,
                        offset,
                    });
                    offset += dim;
                    origin.push(o);
                }
            }
        }
        let mut h = vec![0.0; offset];
        for b in &blocks {
            h[b.offset..b.offset + b.dim()].copy_from_slice(&b.g);
        }
        Self {
            n: prob.n_vars,
            c: prob.objective.clone(),
            eqs: prob
                .eq_rows
                .iter()
                .map(|r| EqRow {
                    cols: r.cols.clone(),
                    vals: r.vals.clone(),
                })
                .collect(),
            b: prob.eq_rhs.clone(),
            col: vec![1.0; prob.n_vars],
            blk: vec![1.0; blocks.len()],
            row: vec![1.0; prob.eq_rows.len()],
            blocks,
            h,
            m: offset,
            origin,
        }
    }

    /// Ruiz equilibration of `[F; A]`: alternately divides every column,
    /// every cone block and every equality row by the square root of its
    /// largest entry. A cone block shares one factor so the cone is kept.
    fn equilibrate(&mut self, passes: usize) {
        for _ in 0..passes {
            let mut cmax = vec![0.0f64; self.n];
            let mut bmax = vec![0.0f64; self.blocks.len()];
            let mut rmax = vec![0.0f64; self.eqs.len()];
            for (bi, b) in self.blocks.iter().enumerate() {
                let w = b.width();
                for (k, a) in b.f.iter().enumerate() {
                    let v = a.abs();
                    bmax[bi] = bmax[bi].max(v);
                    let j = b.cols[k % w];
                    cmax[j] = cmax[j].max(v);
                }
            }
            for (ri, e) in self.eqs.iter().enumerate() {
                for (&j, a) in e.cols.iter().zip(&e.vals) {
                    rmax[ri] = rmax[ri].max(a.abs());
                    cmax[j] = cmax[j].max(a.abs());
                }
            }
            let inv_sqrt = |v: f64| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 };
            let dc: Vec<f64> = cmax.iter().map(|&v| inv_sqrt(v)).collect();
            for (bi, b) in self.blocks.iter_mut().enumerate() {
                let e = inv_sqrt(bmax[bi]);
                self.blk[bi] *= e;
                let w = b.width();
                for (k, a) in b.f.iter_mut().enumerate() {
                    *a *= e * dc[b.cols[k % w]];
                }
                for g in &mut b.g {
                    *g *= e;
                }
            }
            for (ri, e) in self.eqs.iter_mut().enumerate() {
                let r = inv_sqrt(rmax[ri]);
                self.row[ri] *= r;
                self.b[ri] *= r;
                for (&j, a) in e.cols.iter().zip(e.vals.iter_mut()) {
                    *a *= r * dc[j];
                }
            }
            for j in 0..self.n {
                self.col[j] *= dc[j];
                self.c[j] *= dc[j];
            }
        }
        for b in &self.blocks {
            self.h[b.offset..b.offset + b.dim()].copy_from_slice(&b.g);
        }
    }

    fn user_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col).map(|(a, d)| a * d).collect()
    }

    fn user_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.row).map(|(a, r)| a * r).collect()
    }

    /// Cone slack in user scaling, split into user blocks.
    fn user_s(&self, s: &[f64]) -> Vec<Vec<f64>> {
        self.unstack(&self.per_block(s, |v, e| v / e))
    }

    fn user_z(&self, z: &[f64]) -> Vec<Vec<f64>> {
        self.unstack(&self.per_block(z, |v, e| v * e))
    }

    fn per_block(&self, u: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = u.to_vec();
        for (b, &e) in self.blocks.iter().zip(&self.blk) {
            for v in &mut out[b.offset..b.offset + b.dim()] {
                *v = f(*v, e);
            }
        }
        out
    }

    /// `G x = -F x`.
    fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for b in &self.blocks {
            b.add_fx(x, -1.0, &mut out);
        }
        out
    }

    /// `G^T z = -F^T z`.
    fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for b in &self.blocks {
            b.add_ftz(z, -1.0, &mut out);
        }
        out
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.eqs.iter().map(|e| e.dot(x)).collect()
    }

    fn at_mul(&self, y: &[f64], out: &mut [f64]) {
        for (e, &v) in self.eqs.iter().zip(y) {
            for (&j, &a) in e.cols.iter().zip(&e.vals) {
                out[j] += a * v;
            }
        }
    }

    fn degree(&self) -> usize {
        self.blocks.len()
    }

    /// Splits a stacked cone vector back into user blocks.
    fn unstack(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.origin
            .iter()
            .map(|o| match o {
                Origin::Nonneg(idx) => idx.iter().map(|&i| v[self.blocks[i].offset]).collect(),
                Origin::Soc(i) => {
                    let b = &self.blocks[*i];
                    v[b.offset..b.offset + b.dim()].to_vec()
                }
                Origin::Rsoc(i) => {
                    let b = &self.blocks[*i];
                    cones::rotate_point(&v[b.offset..b.offset + b.dim()])
                }
            })
            .collect()
    }
}

/// `max t` such that `u + t e` is on the boundary of the cone, i.e. how far
/// `u` is from being interior (negative if interior).
fn interior_shift(blocks: &[IBlock], u: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for b in blocks {
        let v = &u[b.offset..b.offset + b.dim()];
        let t = if b.soc { norm2(&v[1..]) - v[0] } else { -v[0] };
        worst = worst.max(t);
    }
    worst
}

fn add_identity(blocks: &[IBlock], u: &mut [f64], t: f64) {
    for b in blocks {
        u[b.offset] += t;
    }
}

fn compute_scalings(blocks: &[IBlock], s: &[f64], z: &[f64]) -> Option<Vec<Scaling>> {
    blocks
        .iter()
        .map(|b| {
            let r = b.offset..b.offset + b.dim();
            if b.soc {
                SocScaling::compute(&s[r.clone()], &z[r]).map(Scaling::Soc)
            } else {
                let (sv, zv) = (s[b.offset], z[b.offset]);
                (sv > 0.0 && zv > 0.0).then(|| Scaling::Nonneg {
                    d: (sv / zv).sqrt(),
                    lambda: (sv * zv).sqrt(),
                })
            }
        })
        .collect()
}

fn lambda_of(blocks: &[IBlock], scalings: &[Scaling], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (b, sc) in blocks.iter().zip(scalings) {
        match sc {
            Scaling::Nonneg { lambda, .. } => out[b.offset] = *lambda,
            Scaling::Soc(s) => out[b.offset..b.offset + b.dim()].copy_from_slice(&s.lambda),
        }
    }
    out
}

/// `out = W v` blockwise.
fn apply_w(blocks: &[IBlock], scalings: &[Scaling], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (b, sc) in blocks.iter().zip(scalings) {
        let r = b.offset..b.offset + b.dim();
        match sc {
            Scaling::Nonneg { d, .. } => out[b.offset] = d * v[b.offset],
            Scaling::Soc(s) => cones::matvec(&s.w, s.dim, &v[r.clone()], &mut out[r]),
        }
    }
    out
}

/// Jordan product blockwise.
fn jprod(blocks: &[IBlock], u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for b in blocks {
        let r = b.offset..b.offset + b.dim();
        if b.soc {
            soc_prod(&u[r.clone()], &v[r.clone()], &mut out[r]);
        } else {
            out[b.offset] = u[b.offset] * v[b.offset];
        }
    }
    out
}

/// Solves `lambda o x = d` blockwise.
fn jdiv(blocks: &[IBlock], lambda: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for b in blocks {
        let r = b.offset..b.offset + b.dim();
        if b.soc {
            soc_div(&lambda[r.clone()], &d[r.clone()], &mut out[r]);
        } else {
            out[b.offset] = d[b.offset] / lambda[b.offset];
        }
    }
    out
}

fn max_step(blocks: &[IBlock], u: &[f64], d: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    for b in blocks {
        let r = b.offset..b.offset + b.dim();
        let t = if b.soc {
            soc_max_step(&u[r.clone()], &d[r])
        } else {
            cones::nonneg_max_step(u[b.offset], d[b.offset])
        };
        a = a.min(t);
    }
    a
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub fn solve(prob: &ConicProblem, tol: &ToleranceSet) -> ConicSolution {
    let mut p = Internal::build(prob);
    p.equilibrate(EQUILIBRATION_PASSES);
    let mut kkt = KktSolver::new(p.n, &p.blocks, &p.eqs);

    let resx0 = norm2(&p.c).max(1.0);
    let resy0 = norm2(&p.b).max(1.0);
    let resz0 = norm2(&p.h).max(1.0);
    let nu = p.degree() as f64;

    // starting point from two least-norm problems with W = I
    let ident: Vec<Scaling> = p.blocks.iter().map(Scaling::identity).collect();
    if !kkt.factor(&p.blocks, &p.eqs, &ident) {
        return failed(&p, SolveStatus::Numerical, 0);
    }
    let zero_n = vec![0.0; p.n];
    let zero_m = vec![0.0; p.m];
    let (x0, _, sz) = kkt.solve(&p.blocks, &p.eqs, &ident, &zero_n, &p.b, &p.h);
    let mut s0: Vec<f64> = sz.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = p.c.iter().map(|v| -v).collect();
    let zero_y = vec![0.0; p.eqs.len()];
    let (_, y0, mut z0) = kkt.solve(&p.blocks, &p.eqs, &ident, &neg_c, &zero_y, &zero_m);
    let ts = interior_shift(&p.blocks, &s0);
    if ts >= -1e-8 * norm2(&s0).max(1.0) {
        add_identity(&p.blocks, &mut s0, 1.0 + ts);
    }
    let tz = interior_shift(&p.blocks, &z0);
    if tz >= -1e-8 * norm2(&z0).max(1.0) {
        add_identity(&p.blocks, &mut z0, 1.0 + tz);
    }
    let mut it = Iterate {
        x: x0,
        y: y0,
        s: s0,
        z: z0,
        tau: 1.0,
        kappa: 1.0,
    };

    let mut last = Report::default();
    let mut best: Option<(f64, Iterate, Report)> = None;
    let mut since_drop = 0;
    let mut anchor = f64::INFINITY;
    for iter in 0..=tol.max_iter {
        // residuals
        let gx = p.g_mul(&it.x);
        let gtz = p.gt_mul(&it.z);
        let mut rx = gtz.clone();
        p.at_mul(&it.y, &mut rx);
        let hrx_norm = norm2(&rx);
        axpy(&mut rx, it.tau, &p.c);
        let ax = p.a_mul(&it.x);
        let ry: Vec<f64> = ax.iter().zip(&p.b).map(|(a, b)| -a + it.tau * b).collect();
        let mut rz = it.s.clone();
        axpy(&mut rz, 1.0, &gx);
        axpy(&mut rz, -it.tau, &p.h);
        let cx = dot(&p.c, &it.x);
        let by_hz = dot(&p.b, &it.y) + dot(&p.h, &it.z);
        let rt = it.kappa + cx + by_hz;

        let sz = dot(&it.s, &it.z);
        let mu = (sz + it.tau * it.kappa) / (nu + 1.0);
        let pres = (norm2(&ry) / resy0).max(norm2(&rz) / resz0) / it.tau;
        let dres = norm2(&rx) / resx0 / it.tau;
        let pobj = cx / it.tau;
        let dobj = -by_hz / it.tau;
        let compl = sz / (it.tau * it.tau);
        last = Report {
            pres,
            dres,
            compl,
            pobj,
            dobj,
        };

        let scale = 1f64.max(pobj.abs()).max(dobj.abs());
        let merit = pres.max(dres).max((pobj - dobj).abs() / scale).max(compl / scale);
        if merit.is_finite() && best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
            best = Some((merit, it.clone(), last.clone()));
        }
        if merit < 0.1 * anchor {
            anchor = merit;
            since_drop = 0;
        }
        since_drop += 1;
        if pres <= tol.feas && dres <= tol.feas && (pobj - dobj).abs() <= tol.gap * scale && compl <= tol.gap * scale {
            return finish(&p, &it, SolveStatus::Optimal, iter, &last);
        }
        if by_hz < 0.0 {
            let pinf = hrx_norm / -by_hz / resx0;
            if pinf <= tol.feas {
                let k = -1.0 / by_hz;
                return certificate(&p, &it, SolveStatus::PrimalInfeasible, iter, k, &last);
            }
        }
        if cx < 0.0 {
            let mut gxs = gx.clone();
            axpy(&mut gxs, 1.0, &it.s);
            let dinf = (norm2(&ax) / resy0).max(norm2(&gxs) / resz0) / -cx;
            if dinf <= tol.feas {
                let k = -1.0 / cx;
                return certificate(&p, &it, SolveStatus::DualInfeasible, iter, k, &last);
            }
        }
        if iter == tol.max_iter {
            return finish_best(&p, best, &it, SolveStatus::MaxIter, iter, &last);
        }
        // only near convergence; infeasible runs keep large residuals
        if since_drop > STALL_ITERS && best.as_ref().is_some_and(|(m, _, _)| *m <= STALL_MERIT) {
            return finish_best(&p, best, &it, SolveStatus::Numerical, iter, &last);
        }

        let Some(scalings) = compute_scalings(&p.blocks, &it.s, &it.z) else {
            return finish_best(&p, best, &it, SolveStatus::Numerical, iter, &last);
        };
        if !kkt.factor(&p.blocks, &p.eqs, &scalings) {
            return finish_best(&p, best, &it, SolveStatus::Numerical, iter, &last);
        }
        let lambda = lambda_of(&p.blocks, &scalings, p.m);
        let ll = jprod(&p.blocks, &lambda, &lambda);

        let (x1, y1, z1) = kkt.solve(&p.blocks, &p.eqs, &scalings, &neg_c, &p.b, &p.h);
        let wz1 = apply_w(&p.blocks, &scalings, &z1);
        let wz1_sq = dot(&wz1, &wz1);

        let mut sigma = 0.0;
        let mut aff: Option<(Vec<f64>, Vec<f64>, f64, f64)> = None;
        let mut step = None;
        for corrector in [false, true] {
            let eta = if corrector { 1.0 - sigma } else { 1.0 };
            let mut ds: Vec<f64> = ll.iter().map(|v| -v).collect();
            let mut dk = -it.tau * it.kappa;
            if let Some((dsa, dza, dta, dka)) = &aff {
                let cross = jprod(&p.blocks, dsa, dza);
                axpy(&mut ds, -1.0, &cross);
                add_identity(&p.blocks, &mut ds, sigma * mu);
                dk += -dta * dka + sigma * mu;
            }
            let ld = jdiv(&p.blocks, &lambda, &ds);
            // W^T (lambda \ ds); W is symmetric
            let wld = apply_w(&p.blocks, &scalings, &ld);
            let bx: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let by: Vec<f64> = ry.iter().map(|v| eta * v).collect();
            let bz: Vec<f64> = rz.iter().zip(&wld).map(|(r, w)| -eta * r - w).collect();
            let (x2, y2, z2) = kkt.solve(&p.blocks, &p.eqs, &scalings, &bx, &by, &bz);
            let t2 = dot(&p.c, &x2) + dot(&p.b, &y2) + dot(&p.h, &z2);
            let dtau = (-eta * rt - dk / it.tau - t2) / (-wz1_sq - it.kappa / it.tau);
            let mut dx = x2;
            axpy(&mut dx, dtau, &x1);
            let mut dy = y2;
            axpy(&mut dy, dtau, &y1);
            let mut dz = z2;
            axpy(&mut dz, dtau, &z1);
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            let dz_s = apply_w(&p.blocks, &scalings, &dz);
            let ds_s: Vec<f64> = ld.iter().zip(&dz_s).map(|(a, b)| a - b).collect();

            let mut alpha = max_step(&p.blocks, &lambda, &ds_s).min(max_step(&p.blocks, &lambda, &dz_s));
            if dtau < 0.0 {
                alpha = alpha.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                alpha = alpha.min(-it.kappa / dkappa);
            }
            if corrector {
                step = Some((dx, dy, dz, ds_s, dtau, dkappa, alpha));
            } else {
                let a = alpha.min(1.0);
                sigma = (1.0 - a).powi(3);
                aff = Some((ds_s, dz_s, dtau, dkappa));
            }
        }
        let (dx, dy, dz, ds_s, dtau, dkappa, alpha) = step.expect("corrector step computed");
        let alpha = (STEP * alpha).min(1.0);
        if !(alpha > 1e-13) {
            return finish_best(&p, best, &it, SolveStatus::Numerical, iter, &last);
        }
        // ds = W (lambda \ d - W dz)
        let ds = apply_w(&p.blocks, &scalings, &ds_s);
        axpy(&mut it.x, alpha, &dx);
        axpy(&mut it.y, alpha, &dy);
        axpy(&mut it.z, alpha, &dz);
        axpy(&mut it.s, alpha, &ds);
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
    }
    finish_best(&p, best, &it, SolveStatus::MaxIter, tol.max_iter, &last)
}

#[derive(Default, Clone)]
struct Report {
    pres: f64,
    dres: f64,
    compl: f64,
    pobj: f64,
    dobj: f64,
}

fn finish(p: &Internal, it: &Iterate, status: SolveStatus, iterations: usize, rep: &Report) -> ConicSolution {
    let k = 1.0 / it.tau;
    let sc = |v: &[f64]| v.iter().map(|a| a * k).collect::<Vec<_>>();
    ConicSolution {
        status,
        x: p.user_x(&sc(&it.x)),
        y: p.user_y(&sc(&it.y)),
        s: p.user_s(&sc(&it.s)),
        z: p.user_z(&sc(&it.z)),
        primal_obj: rep.pobj,
        dual_obj: rep.dobj,
        iterations,
        primal_residual: rep.pres,
        dual_residual: rep.dres,
        complementarity: rep.compl,
    }
}

/// Failed exits report the iterate with the smallest worst-case residual.
fn finish_best(
    p: &Internal,
    best: Option<(f64, Iterate, Report)>,
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
    last: &Report,
) -> ConicSolution {
    match best {
        Some((_, b, rep)) => finish(p, &b, status, iterations, &rep),
        None => finish(p, it, status, iterations, last),
    }
}

fn certificate(p: &Internal, it: &Iterate, status: SolveStatus, iterations: usize, k: f64, rep: &Report) -> ConicSolution {
    let sc = |v: &[f64]| v.iter().map(|a| a * k).collect::<Vec<_>>();
    let primal = status == SolveStatus::DualInfeasible;
    ConicSolution {
        status,
        x: if primal { p.user_x(&sc(&it.x)) } else { vec![0.0; p.n] },
        y: if primal { vec![0.0; p.eqs.len()] } else { p.user_y(&sc(&it.y)) },
        s: p.user_s(&if primal { sc(&it.s) } else { vec![0.0; p.m] }),
        z: p.user_z(&if primal { vec![0.0; p.m] } else { sc(&it.z) }),
        primal_obj: if primal { f64::NEG_INFINITY } else { f64::INFINITY },
        dual_obj: if primal { f64::NEG_INFINITY } else { f64::INFINITY },
        iterations,
        primal_residual: rep.pres,
        dual_residual: rep.dres,
        complementarity: rep.compl,
    }
}

fn failed(p: &Internal, status: SolveStatus, iterations: usize) -> ConicSolution {
    ConicSolution {
        status,
        x: vec![0.0; p.n],
        y: vec![0.0; p.eqs.len()],
        s: p.unstack(&vec![0.0; p.m]),
        z: p.unstack(&vec![0.0; p.m]),
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        iterations,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        complementarity: f64::NAN,
    }
}
