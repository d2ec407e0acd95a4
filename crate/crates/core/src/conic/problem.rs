use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A sparse affine expression `sum a_j x_j + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        Self::term(j, 1.0)
    }

    pub fn term(j: usize, a: f64) -> Self {
        Self {
            terms: vec![(j, a)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, j: usize, a: f64) -> &mut Self {
        self.terms.push((j, a));
        self
    }

    pub fn with_term(mut self, j: usize, a: f64) -> Self {
        self.terms.push((j, a));
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Componentwise nonnegative.
    Nonneg,
    /// `t >= ||rest||`.
    Soc,
    /// `u, v >= 0` and `2 u v >= ||rest||^2`.
    Rsoc,
}

impl ConeKind {
    pub fn min_dim(self) -> usize {
        match self {
            ConeKind::Nonneg => 1,
            ConeKind::Soc => 2,
            ConeKind::Rsoc => 3,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ConeKind::Nonneg => "NONNEG",
            ConeKind::Soc => "SOC",
            ConeKind::Rsoc => "RSOC",
        }
    }
}

/// An affine image `F x + g` constrained to lie in a cone. `F` is stored
/// densely over the block's own support columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub cols: Vec<usize>,
    /// `dim x cols.len()`, row-major.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl ConeBlock {
    pub fn from_rows(kind: ConeKind, rows: &[AffineExpr]) -> Self {
        let mut index: BTreeMap<usize, usize> = BTreeMap::new();
        for r in rows {
            for &(j, _) in &r.terms {
                index.entry(j).or_insert(0);
            }
        }
        for (pos, v) in index.values_mut().enumerate() {
            *v = pos;
        }
        let cols: Vec<usize> = index.keys().copied().collect();
        let w = cols.len();
        let mut f = vec![0.0; rows.len() * w];
        let mut g = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                f[r * w + index[&j]] += a;
            }
            g.push(row.constant);
        }
        Self { kind, cols, f, g }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    /// Evaluates `F x + g`.
    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        let w = self.width();
        (0..self.dim())
            .map(|r| {
                self.f[r * w..(r + 1) * w]
                    .iter()
                    .zip(&self.cols)
                    .map(|(a, &j)| a * x[j])
                    .sum::<f64>()
                    + self.g[r]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRow {
    pub fn from_terms(terms: &[(usize, f64)]) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(j, a) in terms {
            *acc.entry(j).or_insert(0.0) += a;
        }
        Self {
            cols: acc.keys().copied().collect(),
            vals: acc.values().copied().collect(),
        }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.cols.iter().zip(&self.vals).map(|(&j, a)| a * x[j]).sum()
    }
}

/// `minimize c^T x` subject to `A x = b` and `F_i x + g_i` in cone `K_i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    pub blocks: Vec<ConeBlock>,
}

impl ConicProblem {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            ..Default::default()
        }
    }

    /// Appends a fresh variable and returns its index.
    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.objective.push(0.0);
        self.n_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.n_vars;
        self.n_vars += count;
        self.objective.resize(self.n_vars, 0.0);
        start..self.n_vars
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn add_equality(&mut self, terms: &[(usize, f64)], rhs: f64) {
        self.eq_rows.push(SparseRow::from_terms(terms));
        self.eq_rhs.push(rhs);
    }

    /// Adds a cone block and returns its index.
    pub fn add_block(&mut self, kind: ConeKind, rows: &[AffineExpr]) -> usize {
        self.blocks.push(ConeBlock::from_rows(kind, rows));
        self.blocks.len() - 1
    }

    pub fn n_cone_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::invariant(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        if self.eq_rows.len() != self.eq_rhs.len() {
            return Err(Error::invariant("equality rows and right-hand side differ in length"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.eq_rhs) {
            return Err(Error::invariant("problem data must be finite"));
        }
        for row in &self.eq_rows {
            if row.cols.len() != row.vals.len() || row.cols.iter().any(|&j| j >= self.n_vars) || !finite(&row.vals) {
                return Err(Error::invariant("malformed equality row"));
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.dim() < b.kind.min_dim() {
                return Err(Error::invariant(format!(
                    "block {i}: {} needs dimension >= {}, got {}",
                    b.kind.keyword(),
                    b.kind.min_dim(),
                    b.dim()
                )));
            }
            if b.f.len() != b.dim() * b.width() {
                return Err(Error::invariant(format!("block {i}: map size does not match its dimensions")));
            }
            if b.cols.iter().any(|&j| j >= self.n_vars) {
                return Err(Error::invariant(format!("block {i}: column index out of range")));
            }
            if b.cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invariant(format!("block {i}: columns must be sorted and unique")));
            }
            if !finite(&b.f) || !finite(&b.g) {
                return Err(Error::invariant(format!("block {i}: map must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSet {
    /// Relative duality gap.
    pub gap: f64,
    /// Relative primal and dual residuals.
    pub feas: f64,
    pub max_iter: usize,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            gap: 1e-8,
            feas: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
    Numerical,
}

/// Solver output. On `PrimalInfeasible` the dual vectors `y`, `z` hold a
/// certificate normalized so that `b^T y + g^T z = -1`; on `DualInfeasible`
/// `x` holds a certificate with `c^T x = -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Cone slack `F x + g` per block.
    pub s: Vec<Vec<f64>>,
    /// Cone dual per block.
    pub z: Vec<Vec<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `<s, z>` of the final iterate.
    pub complementarity: f64,
}
