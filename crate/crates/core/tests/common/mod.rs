//! Random conic programs with known optima, built from a strictly
//! complementary primal-dual pair.
#![allow(dead_code)]

use ddtrack::conic::{rotate_point, AffineExpr, ConeBlock, ConeKind, ConicProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Planted {
    pub prob: ConicProblem,
    pub optimum: f64,
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // sum of uniforms is plenty for test data
    (0..4).map(|_| rng.random::<f64>()).sum::<f64>() - 2.0
}

/// A complementary pair `(s, z)` for one cone, with `s + z` interior.
/// `pin` forces `s = 0` with `z` interior, so the block's rows are all
/// active at the optimum.
pub fn pair(rng: &mut ChaCha8Rng, kind: ConeKind, dim: usize, pin: bool) -> (Vec<f64>, Vec<f64>) {
    if pin {
        let mut z: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        z[0] = z[1..].iter().map(|v| v * v).sum::<f64>().sqrt() + 0.5 + rng.random::<f64>();
        if kind == ConeKind::Nonneg {
            z.iter_mut().for_each(|v| *v = 0.2 + v.abs());
        }
        let z = if kind == ConeKind::Rsoc { rotate_point(&z) } else { z };
        return (vec![0.0; dim], z);
    }
    match kind {
        ConeKind::Nonneg => {
            let mut s = vec![0.0; dim];
            let mut z = vec![0.0; dim];
            for i in 0..dim {
                let v = 0.2 + rng.random::<f64>();
                if rng.random::<bool>() {
                    s[i] = v;
                } else {
                    z[i] = v;
                }
            }
            (s, z)
        }
        ConeKind::Soc | ConeKind::Rsoc => {
            let u: Vec<f64> = (0..dim - 1).map(|_| normal(rng)).collect();
            let r = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            let (s, z) = match rng.random_range(0..3) {
                // both on the boundary, opposite rays
                0 => {
                    let a = 0.5 + rng.random::<f64>();
                    let mut s = vec![r];
                    s.extend(&u);
                    let mut z = vec![a * r];
                    z.extend(u.iter().map(|v| -a * v));
                    (s, z)
                }
                1 => {
                    let mut s = vec![r + 0.5 + rng.random::<f64>()];
                    s.extend(&u);
                    (s, vec![0.0; dim])
                }
                _ => {
                    let mut z = vec![r + 0.5 + rng.random::<f64>()];
                    z.extend(&u);
                    (vec![0.0; dim], z)
                }
            };
            if kind == ConeKind::Rsoc {
                (rotate_point(&s), rotate_point(&z))
            } else {
                (s, z)
            }
        }
    }
}

pub struct Support {
    pub kind: ConeKind,
    pub dim: usize,
    pub cols: Vec<usize>,
    pub pin: bool,
}

/// Builds `min c^T x` with blocks over the given column sets, planting
/// `x*`, `s*`, `z*`, `y*` and back-solving for `g`, `b`, `c`.
pub fn plant(rng: &mut ChaCha8Rng, n: usize, supports: &[Support], n_eq: usize) -> Planted {
    let x: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let mut prob = ConicProblem::new(n);
    let mut c = vec![0.0; n];
    for Support { kind, dim, cols, pin } in supports {
        let (s, z) = pair(rng, *kind, *dim, *pin);
        let rows: Vec<AffineExpr> = (0..*dim)
            .map(|r| {
                let mut e = AffineExpr::default();
                let mut fx = 0.0;
                for &j in cols {
                    let a = normal(rng);
                    e.add_term(j, a);
                    fx += a * x[j];
                }
                e.with_constant(s[r] - fx)
            })
            .collect();
        let idx = prob.add_block(*kind, &rows);
        let blk: &ConeBlock = &prob.blocks[idx];
        // c += F^T z
        let w = blk.width();
        for r in 0..*dim {
            for (k, &j) in blk.cols.iter().enumerate() {
                c[j] += blk.f[r * w + k] * z[r];
            }
        }
    }
    for _ in 0..n_eq {
        let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, normal(rng))).collect();
        let rhs: f64 = terms.iter().map(|&(j, a)| a * x[j]).sum();
        let y = normal(rng);
        // c + A^T y - F^T z = 0  ->  c = F^T z - A^T y
        for &(j, a) in &terms {
            c[j] -= a * y;
        }
        prob.add_equality(&terms, rhs);
    }
    prob.objective = c;
    let optimum = prob.objective.iter().zip(&x).map(|(a, b)| a * b).sum();
    Planted { prob, optimum }
}

pub fn random_kind(rng: &mut ChaCha8Rng) -> (ConeKind, usize) {
    match rng.random_range(0..3) {
        0 => (ConeKind::Nonneg, rng.random_range(1..4)),
        1 => (ConeKind::Soc, rng.random_range(2..6)),
        _ => (ConeKind::Rsoc, rng.random_range(3..6)),
    }
}

/// Small dense instances: every block touches every variable. The first
/// block has at least `n` active rows, so the planted `x*` is the unique
/// minimizer.
pub fn dense_instance(rng: &mut ChaCha8Rng) -> Planted {
    let n = rng.random_range(2..8);
    let n_blocks = rng.random_range(n..n + 6);
    let mut supports = vec![Support {
        kind: [ConeKind::Nonneg, ConeKind::Soc, ConeKind::Rsoc][rng.random_range(0..3)],
        dim: n + 1,
        cols: (0..n).collect(),
        pin: true,
    }];
    supports.extend((1..n_blocks).map(|_| {
        let (kind, dim) = random_kind(rng);
        Support {
            kind,
            dim,
            cols: (0..n).collect(),
            pin: false,
        }
    }));
    let n_eq = rng.random_range(0..2.min(n));
    plant(rng, n, &supports, n_eq)
}

/// Block-arrow instances shaped like the synthesis problems: a few shared
/// columns touched by every block, many groups of private columns, and
/// optionally one budget row spanning all private columns. Each group has one
/// fully active block with more rows than private columns, which pins the
/// solution.
pub fn arrow_instance(rng: &mut ChaCha8Rng, groups: usize, budget: bool) -> Planted {
    let n_global = rng.random_range(3..7);
    let per = 2;
    let n = n_global + groups * per;
    let globals: Vec<usize> = (0..n_global).collect();
    let mut supports = Vec::new();
    for g in 0..groups {
        let locals: Vec<usize> = (0..per).map(|k| n_global + g * per + k).collect();
        let mut cols = globals.clone();
        cols.extend(&locals);
        supports.push(Support {
            kind: ConeKind::Soc,
            dim: per + 1,
            cols: cols.clone(),
            pin: true,
        });
        for _ in 0..rng.random_range(1..3) {
            let (kind, dim) = random_kind(rng);
            supports.push(Support {
                kind,
                dim,
                cols: cols.clone(),
                pin: false,
            });
        }
    }
    if budget {
        supports.push(Support {
            kind: ConeKind::Nonneg,
            dim: 1,
            cols: (n_global..n).collect(),
            pin: false,
        });
    }
    plant(rng, n, &supports, 0)
}

/// The 100-instance mix: every fourth one block-arrow shaped.
pub fn planted_mix(seed: u64, count: usize) -> Vec<Planted> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i % 4 == 3 {
                let groups = rng.random_range(12..40);
                arrow_instance(&mut rng, groups, i % 8 == 7)
            } else {
                dense_instance(&mut rng)
            }
        })
        .collect()
}
