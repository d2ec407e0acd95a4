//! Plain-text problem dump for differential testing against other solvers.
//!
//! ```text
//! conic 1
//! vars 2
//! c 1 0
//! eq 1
//! 1 1 | 2
//! block SOC 3 cols 2 0 1
//! 0 0 | 1
//! 1 0 | 0
//! 0 1 | 0
//! ```
//!
//! Equality rows are dense over all variables; block rows are dense over the
//! listed columns. Numbers use the shortest round-trip decimal form.

use std::fmt::Write as _;

use super::problem::{ConeBlock, ConeKind, ConicProblem, SparseRow};
use crate::error::{Error, Result};

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_dump(prob: &ConicProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "conic 1");
    let _ = writeln!(out, "vars {}", prob.n_vars);
    let _ = writeln!(out, "c {}", join(prob.objective.iter().copied()));
    let _ = writeln!(out, "eq {}", prob.eq_rows.len());
    for (row, rhs) in prob.eq_rows.iter().zip(&prob.eq_rhs) {
        let mut dense = vec![0.0; prob.n_vars];
        for (&j, &a) in row.cols.iter().zip(&row.vals) {
            dense[j] = a;
        }
        let _ = writeln!(out, "{} | {}", join(dense), rhs);
    }
    for b in &prob.blocks {
        let cols: Vec<String> = b.cols.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(out, "block {} {} cols {} {}", b.kind.keyword(), b.dim(), b.width(), cols.join(" "));
        let w = b.width();
        for r in 0..b.dim() {
            let _ = writeln!(out, "{} | {}", join(b.f[r * w..(r + 1) * w].iter().copied()), b.g[r]);
        }
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: "<dump>".into(),
        line,
        msg: msg.into(),
    }
}

fn nums(line: usize, s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(line, format!("not a number: {t:?}"))))
        .collect()
}

fn row(line: usize, s: &str, width: usize) -> Result<(Vec<f64>, f64)> {
    let (lhs, rhs) = s.split_once('|').ok_or_else(|| bad(line, "expected `coefficients | constant`"))?;
    let a = nums(line, lhs)?;
    if a.len() != width {
        return Err(bad(line, format!("expected {width} coefficients, got {}", a.len())));
    }
    let r = nums(line, rhs)?;
    if r.len() != 1 {
        return Err(bad(line, "expected one constant"));
    }
    Ok((a, r[0]))
}

pub fn parse_dump(text: &str) -> Result<ConicProblem> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(0, format!("unexpected end of dump, expected {what}")));

    let (ln, l) = next("header")?;
    if l != "conic 1" {
        return Err(bad(ln, "missing `conic 1` header"));
    }
    let (ln, l) = next("vars")?;
    let n: usize = l
        .strip_prefix("vars ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(ln, "expected `vars <n>`"))?;
    let mut prob = ConicProblem::new(n);
    let (ln, l) = next("objective")?;
    let c = nums(ln, l.strip_prefix('c').ok_or_else(|| bad(ln, "expected `c ...`"))?)?;
    if c.len() != n {
        return Err(bad(ln, format!("objective has {} entries for {n} variables", c.len())));
    }
    prob.objective = c;
    let (ln, l) = next("eq")?;
    let m: usize = l
        .strip_prefix("eq ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(ln, "expected `eq <m>`"))?;
    for _ in 0..m {
        let (ln, l) = next("equality row")?;
        let (a, rhs) = row(ln, l, n)?;
        let terms: Vec<(usize, f64)> = a.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect();
        prob.eq_rows.push(SparseRow::from_terms(&terms));
        prob.eq_rhs.push(rhs);
    }
    while let Ok((ln, l)) = next("block") {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 5 || toks[0] != "block" || toks[3] != "cols" {
            return Err(bad(ln, "expected `block <KIND> <dim> cols <k> <c...>`"));
        }
        let kind = match toks[1] {
            "NONNEG" => ConeKind::Nonneg,
            "SOC" => ConeKind::Soc,
            "RSOC" => ConeKind::Rsoc,
            k => return Err(bad(ln, format!("unknown cone kind {k:?}"))),
        };
        let dim: usize = toks[2].parse().map_err(|_| bad(ln, "bad block dimension"))?;
        let k: usize = toks[4].parse().map_err(|_| bad(ln, "bad column count"))?;
        let cols: Vec<usize> = toks[5..]
            .iter()
            .map(|t| t.parse().map_err(|_| bad(ln, format!("bad column index {t:?}"))))
            .collect::<Result<_>>()?;
        if cols.len() != k {
            return Err(bad(ln, format!("expected {k} column indices, got {}", cols.len())));
        }
        let mut f = Vec::with_capacity(dim * k);
        let mut g = Vec::with_capacity(dim);
        for _ in 0..dim {
            let (ln, l) = next("block row")?;
            let (a, c) = row(ln, l, k)?;
            f.extend(a);
            g.push(c);
        }
        prob.blocks.push(ConeBlock { kind, cols, f, g });
    }
    prob.validate()?;
    Ok(prob)
}
