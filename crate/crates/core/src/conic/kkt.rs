//! Newton system of the interior-point method.
//!
//! The KKT system
//!
//! ```text
//! [ 0  A^T  G^T    ] [ux]   [bx]
//! [ A  0    0      ] [uy] = [by]
//! [ G  0   -W^T W  ] [uz]   [bz]
//! ```
//!
//! is reduced to normal equations `H ux = r` with
//! `H = (W^-1 G)^T (W^-1 G) + A^T A`. `H` is never formed: its triangular
//! factor `R` (with `H = R^T R`) is accumulated row by row from the scaled
//! rows `W^-1 F` using Givens rotations, which keeps the accuracy of a QR
//! factorization instead of squaring the condition number.
//!
//! Cone blocks are small and touch a handful of "global" columns (shared by
//! many blocks) plus a few "local" columns that only a couple of blocks share.
//! Local columns are grouped into connected components, so `R` has a block
//! arrow shape: one small triangle per component, a dense coupling to the
//! global columns, and a dense triangle over the global columns. Rows with a
//! very wide support (budget rows) would couple every component, so they are
//! applied as a low-rank Woodbury correction instead.

use super::cones::SocScaling;
use super::dense::{self, chol_solve, cholesky};

/// Internal cone block: a single nonnegative row or one second-order cone,
/// with `s = F x + g` (so `G = -F`, `h = g`).
#[derive(Debug, Clone)]
pub(crate) struct IBlock {
    pub soc: bool,
    pub cols: Vec<usize>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub offset: usize,
}

impl IBlock {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    /// `out += alpha * F x` over this block's rows.
    pub fn add_fx(&self, x: &[f64], alpha: f64, out: &mut [f64]) {
        let w = self.width();
        for r in 0..self.dim() {
            let row = &self.f[r * w..(r + 1) * w];
            let v: f64 = row.iter().zip(&self.cols).map(|(a, &j)| a * x[j]).sum();
            out[self.offset + r] += alpha * v;
        }
    }

    /// `out += alpha * F^T z` where `z` is the full stacked cone vector.
    pub fn add_ftz(&self, z: &[f64], alpha: f64, out: &mut [f64]) {
        let w = self.width();
        for r in 0..self.dim() {
            let zr = alpha * z[self.offset + r];
            if zr == 0.0 {
                continue;
            }
            let row = &self.f[r * w..(r + 1) * w];
            for (a, &j) in row.iter().zip(&self.cols) {
                out[j] += a * zr;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EqRow {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl EqRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.cols.iter().zip(&self.vals).map(|(&j, a)| a * x[j]).sum()
    }
}

/// NT scaling of one internal block.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    /// `W = d`, `lambda = sqrt(s z)`.
    Nonneg { d: f64, lambda: f64 },
    Soc(SocScaling),
}

impl Scaling {
    pub fn identity(block: &IBlock) -> Self {
        if block.soc {
            let n = block.dim();
            let mut eye = vec![0.0; n * n];
            for i in 0..n {
                eye[i * n + i] = 1.0;
            }
            let mut lambda = vec![0.0; n];
            lambda[0] = 1.0;
            Scaling::Soc(SocScaling {
                dim: n,
                w: eye.clone(),
                winv: eye,
                lambda,
            })
        } else {
            Scaling::Nonneg { d: 1.0, lambda: 1.0 }
        }
    }

    /// `out = W^-1 F` for a row-major `F` with `width` columns.
    fn scale_rows(&self, f: &[f64], width: usize, out: &mut Vec<f64>) {
        out.clear();
        match self {
            Scaling::Nonneg { d, .. } => out.extend(f.iter().map(|v| v / d)),
            Scaling::Soc(sc) => {
                let n = sc.dim;
                out.resize(n * width, 0.0);
                for i in 0..n {
                    for k in 0..n {
                        let a = sc.winv[i * n + k];
                        if a == 0.0 {
                            continue;
                        }
                        for c in 0..width {
                            out[i * width + c] += a * f[k * width + c];
                        }
                    }
                }
            }
        }
    }

    /// `out = W^T W v`.
    pub fn apply_wtw(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { d, .. } => out[0] = d * d * v[0],
            Scaling::Soc(sc) => {
                let n = sc.dim;
                let mut tmp = vec![0.0; n];
                super::cones::matvec(&sc.w, n, v, &mut tmp);
                super::cones::matvec(&sc.w, n, &tmp, out);
            }
        }
    }

    /// `out = (W^T W)^-1 v`.
    pub fn apply_m(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { d, .. } => out[0] = v[0] / (d * d),
            Scaling::Soc(sc) => {
                let n = sc.dim;
                let mut tmp = vec![0.0; n];
                super::cones::matvec(&sc.winv, n, v, &mut tmp);
                super::cones::matvec(&sc.winv, n, &tmp, out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Local(usize),
    Global(usize),
}

#[derive(Debug, Clone, Copy)]
enum TermRef {
    Block(usize),
    Eq(usize),
}

/// Union-find over column indices.
struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

const WIDE_MIN_COLS: usize = 256;
const GLOBAL_MIN_COUNT: usize = 24;

/// Rotates the row `v` into the upper trapezoid `r` (`rows x width`,
/// row-major, row `i` starting at column `i`), leaving `v[..rows]` zero.
fn absorb(r: &mut [f64], rows: usize, width: usize, v: &mut [f64]) {
    for i in 0..rows {
        let b = v[i];
        if b == 0.0 {
            continue;
        }
        let ri = &mut r[i * width..(i + 1) * width];
        let a = ri[i];
        let h = a.hypot(b);
        let (c, s) = (a / h, b / h);
        ri[i] = h;
        v[i] = 0.0;
        for j in i + 1..width {
            let (x, y) = (ri[j], v[j]);
            ri[j] = c * x + s * y;
            v[j] = c * y - s * x;
        }
    }
}

/// Solves `U x = b` in place for the leading `n x n` triangle of a
/// row-major upper trapezoid with row stride `width`.
fn upper_solve(u: &[f64], n: usize, width: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= u[i * width + k] * b[k];
        }
        b[i] = v / u[i * width + i];
    }
}

/// Solves `U^T x = b` in place.
fn upper_t_solve(u: &[f64], n: usize, width: usize, b: &mut [f64]) {
    for i in 0..n {
        let v = b[i] / u[i * width + i];
        b[i] = v;
        for k in i + 1..n {
            b[k] -= u[i * width + k] * v;
        }
    }
}

pub(crate) struct KktSolver {
    n: usize,
    slot: Vec<Slot>,
    /// member columns of each local component
    comps: Vec<Vec<usize>>,
    n_global: usize,
    global_cols: Vec<usize>,
    /// narrow terms with their component (if they touch local columns)
    narrow: Vec<(TermRef, Option<usize>)>,
    wide: Vec<TermRef>,
    // numeric state
    /// per component, `k x (k + n_global)`: the local triangle followed by
    /// its coupling to the global columns
    comp_r: Vec<Vec<f64>>,
    r_g: Vec<f64>,
    /// scaled wide rows `U` and `(R^T R)^-1 U^T`
    u_rows: Vec<Vec<f64>>,
    v_cols: Vec<Vec<f64>>,
    c_l: Vec<f64>,
    /// `H'^-1 A^T`, one column per equality row
    z_cols: Vec<Vec<f64>>,
    e_l: Vec<f64>,
    pub reg: f64,
}

impl KktSolver {
    pub fn new(n: usize, blocks: &[IBlock], eqs: &[EqRow]) -> Self {
        let mut terms: Vec<(TermRef, &[usize])> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (TermRef::Block(i), b.cols.as_slice()))
            .collect();
        terms.extend(eqs.iter().enumerate().map(|(i, e)| (TermRef::Eq(i), e.cols.as_slice())));

        // wide candidates, demoted when a column would be left to them alone
        let mut is_wide: Vec<bool> = terms.iter().map(|(_, c)| c.len() > WIDE_MIN_COLS).collect();
        let mut cover = vec![0usize; n];
        for (t, (_, cols)) in terms.iter().enumerate() {
            if !is_wide[t] {
                for &j in *cols {
                    cover[j] += 1;
                }
            }
        }
        for (t, (_, cols)) in terms.iter().enumerate() {
            if is_wide[t] && cols.iter().any(|&j| cover[j] == 0) {
                is_wide[t] = false;
                for &j in *cols {
                    cover[j] += 1;
                }
            }
        }
        let is_global: Vec<bool> = cover.iter().map(|&c| c > GLOBAL_MIN_COUNT).collect();
        let mut dsu = Dsu((0..n).collect());
        for (t, (_, cols)) in terms.iter().enumerate() {
            if is_wide[t] {
                continue;
            }
            let mut first = None;
            for &j in *cols {
                if is_global[j] {
                    continue;
                }
                match first {
                    None => first = Some(j),
                    Some(f) => dsu.union(f, j),
                }
            }
        }

        let mut slot = vec![Slot::Global(0); n];
        let mut global_cols = Vec::new();
        let mut comp_of_root = vec![usize::MAX; n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for j in 0..n {
            if is_global[j] {
                slot[j] = Slot::Global(global_cols.len());
                global_cols.push(j);
            } else {
                let r = dsu.find(j);
                if comp_of_root[r] == usize::MAX {
                    comp_of_root[r] = comps.len();
                    comps.push(Vec::new());
                }
                let c = comp_of_root[r];
                slot[j] = Slot::Local(comps[c].len());
                comps[c].push(j);
            }
        }

        let mut narrow = Vec::new();
        let mut wide = Vec::new();
        for (t, (r, cols)) in terms.iter().enumerate() {
            if is_wide[t] {
                wide.push(*r);
            } else {
                let comp = cols.iter().find(|&&j| !is_global[j]).map(|&j| comp_of_root[dsu.find(j)]);
                narrow.push((*r, comp));
            }
        }

        let n_global = global_cols.len();
        Self {
            n,
            slot,
            comp_r: comps.iter().map(|c| vec![0.0; c.len() * (c.len() + n_global)]).collect(),
            comps,
            n_global,
            global_cols,
            narrow,
            wide,
            r_g: vec![0.0; n_global * n_global],
            u_rows: Vec::new(),
            v_cols: Vec::new(),
            c_l: Vec::new(),
            z_cols: Vec::new(),
            e_l: Vec::new(),
            reg: 0.0,
        }
    }

    /// Factors the normal equations for the given scalings. Retries with
    /// stronger regularization on breakdown; returns `false` if all retries
    /// fail.
    pub fn factor(&mut self, blocks: &[IBlock], eqs: &[EqRow], scalings: &[Scaling]) -> bool {
        let mut reg = 1e-13;
        for _ in 0..5 {
            self.reg = reg;
            if self.try_factor(blocks, eqs, scalings) {
                return true;
            }
            reg *= 100.0;
        }
        false
    }

    /// Scaled rows `W^-1 F` (or the equality row) of one term.
    fn term_rows<'a>(
        term: TermRef,
        blocks: &'a [IBlock],
        eqs: &'a [EqRow],
        scalings: &[Scaling],
        buf: &mut Vec<f64>,
    ) -> (&'a [usize], usize) {
        match term {
            TermRef::Block(i) => {
                let b = &blocks[i];
                scalings[i].scale_rows(&b.f, b.width(), buf);
                (&b.cols, b.dim())
            }
            TermRef::Eq(i) => {
                buf.clear();
                buf.extend_from_slice(&eqs[i].vals);
                (&eqs[i].cols, 1)
            }
        }
    }

    fn try_factor(&mut self, blocks: &[IBlock], eqs: &[EqRow], scalings: &[Scaling]) -> bool {
        let ng = self.n_global;
        for r in &mut self.comp_r {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        self.r_g.iter_mut().for_each(|v| *v = 0.0);

        // diagonal of H, for relative regularization
        let mut diag = vec![0.0; self.n];
        let mut buf = Vec::new();
        for &term in self.narrow.iter().map(|(t, _)| t).chain(&self.wide) {
            let (cols, d) = Self::term_rows(term, blocks, eqs, scalings, &mut buf);
            let w = cols.len();
            for r in 0..d {
                for (c, &j) in cols.iter().enumerate() {
                    diag[j] += buf[r * w + c] * buf[r * w + c];
                }
            }
        }

        let mut row = Vec::new();
        for &(term, comp) in &self.narrow {
            let (cols, d) = Self::term_rows(term, blocks, eqs, scalings, &mut buf);
            let w = cols.len();
            match comp {
                Some(c) => {
                    let k = self.comps[c].len();
                    let width = k + ng;
                    for r in 0..d {
                        row.clear();
                        row.resize(width, 0.0);
                        for (cc, &j) in cols.iter().enumerate() {
                            let pos = match self.slot[j] {
                                Slot::Local(p) => p,
                                Slot::Global(g) => k + g,
                            };
                            row[pos] += buf[r * w + cc];
                        }
                        absorb(&mut self.comp_r[c], k, width, &mut row);
                        absorb(&mut self.r_g, ng, ng, &mut row[k..]);
                    }
                }
                None => {
                    for r in 0..d {
                        row.clear();
                        row.resize(ng, 0.0);
                        for (cc, &j) in cols.iter().enumerate() {
                            if let Slot::Global(g) = self.slot[j] {
                                row[g] += buf[r * w + cc];
                            }
                        }
                        absorb(&mut self.r_g, ng, ng, &mut row);
                    }
                }
            }
        }

        // regularization rows sqrt(delta_j) e_j
        let reg = self.reg;
        for (c, members) in self.comps.iter().enumerate() {
            let k = members.len();
            for (p, &j) in members.iter().enumerate() {
                row.clear();
                row.resize(k + ng, 0.0);
                row[p] = (reg * diag[j].max(1.0)).sqrt();
                absorb(&mut self.comp_r[c], k, k + ng, &mut row);
            }
        }
        for (g, &j) in self.global_cols.iter().enumerate() {
            row.clear();
            row.resize(ng, 0.0);
            row[g] = (reg * diag[j].max(1.0)).sqrt();
            absorb(&mut self.r_g, ng, ng, &mut row);
        }

        let ok = |r: &[f64], k: usize, width: usize| (0..k).all(|i| r[i * width + i] > 0.0) && r.iter().all(|v| v.is_finite());
        if !self.comps.iter().zip(&self.comp_r).all(|(m, r)| ok(r, m.len(), m.len() + ng)) || !ok(&self.r_g, ng, ng) {
            return false;
        }

        // wide rows enter as a low-rank update H = R^T R + U^T U; with the rows
        // already scaled by W^-1 the capacitance matrix I + U H_n^-1 U^T has
        // all eigenvalues >= 1
        self.u_rows.clear();
        self.v_cols.clear();
        for &term in &self.wide {
            let (cols, d) = Self::term_rows(term, blocks, eqs, scalings, &mut buf);
            let w = cols.len();
            for r in 0..d {
                let mut u = vec![0.0; self.n];
                for (cc, &j) in cols.iter().enumerate() {
                    u[j] += buf[r * w + cc];
                }
                let mut v = u.clone();
                self.solve_narrow(&mut v);
                self.u_rows.push(u);
                self.v_cols.push(v);
            }
        }
        let rw = self.u_rows.len();
        if rw > 0 {
            let mut cm = vec![0.0; rw * rw];
            for a in 0..rw {
                for b in 0..=a {
                    let v = dense::dot(&self.u_rows[a], &self.v_cols[b]) + if a == b { 1.0 } else { 0.0 };
                    cm[a * rw + b] = v;
                    cm[b * rw + a] = v;
                }
            }
            if cholesky(&mut cm, rw).is_err() {
                return false;
            }
            self.c_l = cm;
        }

        // equality Schur complement A H^-1 A^T
        self.z_cols.clear();
        let m = eqs.len();
        if m > 0 {
            for e in eqs {
                let mut v = vec![0.0; self.n];
                for (&j, &a) in e.cols.iter().zip(&e.vals) {
                    v[j] = a;
                }
                self.solve_h(&mut v);
                self.z_cols.push(v);
            }
            let mut em = vec![0.0; m * m];
            for a in 0..m {
                for b in 0..m {
                    em[a * m + b] = eqs[a].dot(&self.z_cols[b]);
                }
            }
            for a in 0..m {
                for b in 0..a {
                    let v = 0.5 * (em[a * m + b] + em[b * m + a]);
                    em[a * m + b] = v;
                    em[b * m + a] = v;
                }
            }
            let scale = (0..m).map(|i| em[i * m + i]).fold(0.0, f64::max).max(1.0);
            for i in 0..m {
                em[i * m + i] += reg * scale;
            }
            if cholesky(&mut em, m).is_err() {
                return false;
            }
            self.e_l = em;
        }
        true
    }

    /// Applies `(R^T R + U^T U)^-1` in place.
    fn solve_h(&self, r: &mut [f64]) {
        self.solve_narrow(r);
        let rw = self.u_rows.len();
        if rw > 0 {
            let mut t: Vec<f64> = self.u_rows.iter().map(|u| dense::dot(u, r)).collect();
            chol_solve(&self.c_l, rw, &mut t);
            for (v, &coef) in self.v_cols.iter().zip(&t) {
                for (ri, vi) in r.iter_mut().zip(v) {
                    *ri -= coef * vi;
                }
            }
        }
    }

    /// Applies `(R^T R)^-1` in place.
    fn solve_narrow(&self, r: &mut [f64]) {
        let ng = self.n_global;
        // R^T w = r
        let mut rg: Vec<f64> = self.global_cols.iter().map(|&j| r[j]).collect();
        let mut w_local: Vec<Vec<f64>> = Vec::with_capacity(self.comps.len());
        for (c, members) in self.comps.iter().enumerate() {
            let k = members.len();
            let width = k + ng;
            let rc = &self.comp_r[c];
            let mut w: Vec<f64> = members.iter().map(|&j| r[j]).collect();
            upper_t_solve(rc, k, width, &mut w);
            for i in 0..k {
                let wi = w[i];
                if wi == 0.0 {
                    continue;
                }
                let coupling = &rc[i * width + k..(i + 1) * width];
                for g in 0..ng {
                    rg[g] -= coupling[g] * wi;
                }
            }
            w_local.push(w);
        }
        upper_t_solve(&self.r_g, ng, ng, &mut rg);
        // R u = w
        upper_solve(&self.r_g, ng, ng, &mut rg);
        for (g, &j) in self.global_cols.iter().enumerate() {
            r[j] = rg[g];
        }
        for (c, members) in self.comps.iter().enumerate() {
            let k = members.len();
            let width = k + ng;
            let rc = &self.comp_r[c];
            let w = &mut w_local[c];
            for i in 0..k {
                w[i] -= dense::dot(&rc[i * width + k..(i + 1) * width], &rg);
            }
            upper_solve(rc, k, width, w);
            for (i, &j) in members.iter().enumerate() {
                r[j] = w[i];
            }
        }
    }

    fn solve_once(
        &self,
        blocks: &[IBlock],
        eqs: &[EqRow],
        scalings: &[Scaling],
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let nz = bz.len();
        // r1 = bx + G^T M bz + A^T by,  G = -F
        let mut mbz = vec![0.0; nz];
        for (b, sc) in blocks.iter().zip(scalings) {
            let o = b.offset;
            let d = b.dim();
            sc.apply_m(&bz[o..o + d], &mut mbz[o..o + d]);
        }
        let mut r1 = bx.to_vec();
        for b in blocks {
            b.add_ftz(&mbz, -1.0, &mut r1);
        }
        for (e, &v) in eqs.iter().zip(by) {
            for (&j, &a) in e.cols.iter().zip(&e.vals) {
                r1[j] += a * v;
            }
        }
        let mut ux = r1;
        self.solve_h(&mut ux);
        let m = eqs.len();
        let mut uy = vec![0.0; m];
        if m > 0 {
            for i in 0..m {
                uy[i] = eqs[i].dot(&ux) - by[i];
            }
            chol_solve(&self.e_l, m, &mut uy);
            for (zc, &yv) in self.z_cols.iter().zip(&uy) {
                for j in 0..n {
                    ux[j] -= zc[j] * yv;
                }
            }
        }
        // uz = M (G ux - bz) = M (-F ux - bz)
        let mut t = vec![0.0; nz];
        for b in blocks {
            b.add_fx(&ux, -1.0, &mut t);
        }
        for (ti, bi) in t.iter_mut().zip(bz) {
            *ti -= bi;
        }
        let mut uz = vec![0.0; nz];
        for (b, sc) in blocks.iter().zip(scalings) {
            let o = b.offset;
            let d = b.dim();
            sc.apply_m(&t[o..o + d], &mut uz[o..o + d]);
        }
        (ux, uy, uz)
    }

    /// Solves the full KKT system with a few steps of iterative refinement.
    pub fn solve(
        &self,
        blocks: &[IBlock],
        eqs: &[EqRow],
        scalings: &[Scaling],
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut ux, mut uy, mut uz) = self.solve_once(blocks, eqs, scalings, bx, by, bz);
        let rhs_norm = dense::norm_inf(bx).max(dense::norm_inf(by)).max(dense::norm_inf(bz)).max(1e-300);
        let mut last = f64::INFINITY;
        for _ in 0..5 {
            let (rx, ry, rz) = kkt_residual(blocks, eqs, scalings, bx, by, bz, &ux, &uy, &uz);
            let res = dense::norm_inf(&rx).max(dense::norm_inf(&ry)).max(dense::norm_inf(&rz));
            if res <= 1e-15 * rhs_norm || res >= 0.5 * last {
                break;
            }
            last = res;
            let (dx, dy, dz) = self.solve_once(blocks, eqs, scalings, &rx, &ry, &rz);
            ux.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            uy.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
            uz.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        }
        (ux, uy, uz)
    }
}

/// Residual `b - K u` of the unregularized KKT system.
#[allow(clippy::too_many_arguments)]
pub(crate) fn kkt_residual(
    blocks: &[IBlock],
    eqs: &[EqRow],
    scalings: &[Scaling],
    bx: &[f64],
    by: &[f64],
    bz: &[f64],
    ux: &[f64],
    uy: &[f64],
    uz: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // rx = bx - A^T uy - G^T uz = bx - A^T uy + F^T uz
    let mut rx = bx.to_vec();
    for (e, &v) in eqs.iter().zip(uy) {
        for (&j, &a) in e.cols.iter().zip(&e.vals) {
            rx[j] -= a * v;
        }
    }
    for b in blocks {
        b.add_ftz(uz, 1.0, &mut rx);
    }
    let ry: Vec<f64> = eqs.iter().zip(by).map(|(e, &b)| b - e.dot(ux)).collect();
    // rz = bz - G ux + W^T W uz = bz + F ux + W^T W uz
    let mut rz = bz.to_vec();
    for b in blocks {
        b.add_fx(ux, 1.0, &mut rz);
    }
    let mut tmp = Vec::new();
    for (b, sc) in blocks.iter().zip(scalings) {
        let o = b.offset;
        let d = b.dim();
        tmp.resize(d, 0.0);
        sc.apply_wtw(&uz[o..o + d], &mut tmp);
        for r in 0..d {
            rz[o + r] += tmp[r];
        }
    }
    (rx, ry, rz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Arrow-shaped blocks plus one wide row; compares against a dense
    /// normal-equation solve.
    #[test]
    fn structured_factor_matches_dense_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ng = 4;
        let groups = 150;
        let n = ng + 2 * groups;
        let mut blocks = Vec::new();
        let mut offset = 0;
        for g in 0..groups {
            for _ in 0..2 {
                let mut cols: Vec<usize> = (0..ng).collect();
                cols.extend([ng + 2 * g, ng + 2 * g + 1]);
                let dim = 3;
                let f: Vec<f64> = (0..dim * cols.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                blocks.push(IBlock { soc: true, cols, f, g: vec![0.0; dim], offset });
                offset += dim;
            }
        }
        let wide_cols: Vec<usize> = (ng..n).collect();
        let f: Vec<f64> = wide_cols.iter().map(|_| rng.random_range(0.5..1.0)).collect();
        blocks.push(IBlock { soc: false, cols: wide_cols, f, g: vec![0.0], offset });
        let scalings: Vec<Scaling> = blocks
            .iter()
            .map(|b| {
                if b.soc {
                    let s = [2.0, 0.3, -0.4];
                    let z = [1.5, -0.2, 0.1];
                    Scaling::Soc(SocScaling::compute(&s, &z).unwrap())
                } else {
                    Scaling::Nonneg { d: 0.1, lambda: 1.0 }
                }
            })
            .collect();
        let mut kkt = KktSolver::new(n, &blocks, &[]);
        assert_eq!(kkt.wide.len(), 1);
        assert_eq!(kkt.n_global, ng);
        assert!(kkt.factor(&blocks, &[], &scalings));

        // dense H = sum (W^-1 F)^T (W^-1 F)
        let mut h = vec![0.0; n * n];
        let mut buf = Vec::new();
        for (b, sc) in blocks.iter().zip(&scalings) {
            sc.scale_rows(&b.f, b.width(), &mut buf);
            let w = b.width();
            for r in 0..b.dim() {
                for (a, &i) in b.cols.iter().enumerate() {
                    for (c, &j) in b.cols.iter().enumerate() {
                        h[i * n + j] += buf[r * w + a] * buf[r * w + c];
                    }
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rhs: Vec<f64> = (0..n).map(|i| dense::dot(&h[i * n..(i + 1) * n], &x_true)).collect();
        kkt.solve_h(&mut rhs);
        let err = rhs.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err:e}");
    }
}
