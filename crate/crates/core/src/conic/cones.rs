//! Cone membership, the rotated-cone reduction and Nesterov-Todd scaling.

use std::f64::consts::FRAC_1_SQRT_2;

use super::problem::{ConeBlock, ConeKind};

/// `u0^2 - ||u1||^2`, evaluated as a product to limit cancellation.
pub fn soc_det(u: &[f64]) -> f64 {
    let r = tail_norm(u);
    (u[0] - r) * (u[0] + r)
}

fn tail_norm(u: &[f64]) -> f64 {
    u[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Second-order cone membership with absolute slack `tol`.
pub fn in_soc(u: &[f64], tol: f64) -> bool {
    u[0] + tol >= tail_norm(u)
}

/// Rotated cone membership: `u, v >= -tol` and `2 u v + tol >= ||w||^2`.
pub fn in_rsoc(u: &[f64], tol: f64) -> bool {
    let w2: f64 = u[2..].iter().map(|v| v * v).sum();
    u[0] >= -tol && u[1] >= -tol && 2.0 * u[0] * u[1] + tol >= w2
}

/// Maps a rotated-cone point `(u, v, w)` to `((u+v)/sqrt2, (u-v)/sqrt2, w)`.
/// The map is an orthogonal involution, so it also sends the second-order
/// cone back to the rotated one.
pub fn rotate_point(u: &[f64]) -> Vec<f64> {
    let mut out = u.to_vec();
    out[0] = (u[0] + u[1]) * FRAC_1_SQRT_2;
    out[1] = (u[0] - u[1]) * FRAC_1_SQRT_2;
    out
}

/// Rewrites an RSOC block as the equivalent SOC block.
pub fn rsoc_to_soc(block: &ConeBlock) -> ConeBlock {
    assert_eq!(block.kind, ConeKind::Rsoc, "rsoc_to_soc expects an RSOC block");
    let w = block.width();
    let mut f = block.f.clone();
    for c in 0..w {
        let a = block.f[c];
        let b = block.f[w + c];
        f[c] = (a + b) * FRAC_1_SQRT_2;
        f[w + c] = (a - b) * FRAC_1_SQRT_2;
    }
    ConeBlock {
        kind: ConeKind::Soc,
        cols: block.cols.clone(),
        f,
        g: rotate_point(&block.g),
    }
}

/// Largest `alpha` with `u + alpha d` in the closed second-order cone, for
/// `u` in the interior. Returns `f64::INFINITY` when unbounded.
pub fn soc_max_step(u: &[f64], d: &[f64]) -> f64 {
    // f(alpha) = a alpha^2 + 2 b alpha + c with f(0) = c > 0; the ray leaves
    // the cone at the smallest positive root of f
    let a = d[0] * d[0] - d[1..].iter().map(|v| v * v).sum::<f64>();
    let b = u[0] * d[0] - u[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>();
    let c = soc_det(u).max(0.0);
    if a == 0.0 {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -(b + if b >= 0.0 { 1.0 } else { -1.0 } * disc.sqrt());
    let mut best = f64::INFINITY;
    for r in [q / a, c / q] {
        if r >= 0.0 && r < best {
            best = r;
        }
    }
    best
}

pub fn nonneg_max_step(u: f64, d: f64) -> f64 {
    if d < 0.0 {
        -u / d
    } else {
        f64::INFINITY
    }
}

/// Jordan product `u o v`.
pub fn soc_prod(u: &[f64], v: &[f64], out: &mut [f64]) {
    out[0] = u.iter().zip(v).map(|(a, b)| a * b).sum();
    for i in 1..u.len() {
        out[i] = u[0] * v[i] + v[0] * u[i];
    }
}

/// Solves `lambda o x = d` for `x`.
pub fn soc_div(lambda: &[f64], d: &[f64], out: &mut [f64]) {
    let l1d1: f64 = lambda[1..].iter().zip(&d[1..]).map(|(a, b)| a * b).sum();
    let det = soc_det(lambda);
    let x0 = (lambda[0] * d[0] - l1d1) / det;
    out[0] = x0;
    for i in 1..lambda.len() {
        out[i] = (d[i] - x0 * lambda[i]) / lambda[0];
    }
}

/// Symmetric Nesterov-Todd scaling `W` of one second-order cone block,
/// satisfying `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub struct SocScaling {
    pub dim: usize,
    /// `W`, row-major.
    pub w: Vec<f64>,
    /// `W^{-1}`, row-major.
    pub winv: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SocScaling {
    /// Returns `None` if `s` or `z` is not strictly interior.
    pub fn compute(s: &[f64], z: &[f64]) -> Option<Self> {
        let n = s.len();
        let sd = soc_det(s);
        let zd = soc_det(z);
        if !(sd > 0.0 && zd > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
            return None;
        }
        let sn = sd.sqrt();
        let zn = zd.sqrt();
        let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
        let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
        let gamma = ((1.0 + sb.iter().zip(&zb).map(|(a, b)| a * b).sum::<f64>()) / 2.0).sqrt();
        let mut wb = vec![0.0; n];
        wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
        for i in 1..n {
            wb[i] = (sb[i] - zb[i]) / (2.0 * gamma);
        }
        let eta = (sd / zd).powf(0.25);
        let mut w = vec![0.0; n * n];
        let mut winv = vec![0.0; n * n];
        let denom = 1.0 + wb[0];
        w[0] = wb[0];
        winv[0] = wb[0];
        for i in 1..n {
            w[i] = wb[i];
            w[i * n] = wb[i];
            winv[i] = -wb[i];
            winv[i * n] = -wb[i];
            for j in 1..n {
                let v = wb[i] * wb[j] / denom + if i == j { 1.0 } else { 0.0 };
                w[i * n + j] = v;
                winv[i * n + j] = v;
            }
        }
        for v in &mut w {
            *v *= eta;
        }
        for v in &mut winv {
            *v /= eta;
        }
        let mut lambda = vec![0.0; n];
        matvec(&w, n, z, &mut lambda);
        Some(Self { dim: n, w, winv, lambda })
    }
}

/// `out = M v` for a row-major square `M`.
pub fn matvec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn rotation_examples() {
        let r2 = 2f64.sqrt();
        let p = rotate_point(&[1.0, 1.0, r2]);
        assert!(close(&p, &[r2, 0.0, r2], 1e-15));
        // boundary on both sides: 2uv = w^2 and t = ||rest||
        assert!((soc_det(&p)).abs() < 1e-14);

        let p = rotate_point(&[1.0, 1.0, 0.0]);
        assert!(close(&p, &[r2, 0.0, 0.0], 1e-15));
        assert!(soc_det(&p) > 0.0);
    }

    #[test]
    fn rotation_preserves_membership_direct_check() {
        let u = [2.0, 0.5, 1.4];
        // direct: 2*2*0.5 = 2 >= 1.96
        assert!(in_rsoc(&u, 0.0));
        assert!(in_soc(&rotate_point(&u), 0.0));
        let outside = [2.0, 0.5, 1.5];
        assert!(!in_rsoc(&outside, 0.0));
        assert!(!in_soc(&rotate_point(&outside), 0.0));
    }

    #[test]
    fn block_rotation_matches_point_rotation() {
        use super::super::problem::AffineExpr;
        let rows = [
            AffineExpr::var(0).with_constant(1.0),
            AffineExpr::term(1, 2.0).with_term(0, -1.0),
            AffineExpr::term(2, 0.5),
        ];
        let b = ConeBlock::from_rows(ConeKind::Rsoc, &rows);
        let soc = rsoc_to_soc(&b);
        let x = [0.3, -1.2, 4.0];
        assert!(close(&soc.image(&x), &rotate_point(&b.image(&x)), 1e-14));
    }

    #[test]
    fn nt_scaling_identities() {
        let s = [3.0, 1.0, -0.5, 0.2];
        let z = [2.0, -0.3, 0.9, 0.4];
        let sc = SocScaling::compute(&s, &z).unwrap();
        let n = 4;
        let mut wz = vec![0.0; n];
        let mut wis = vec![0.0; n];
        matvec(&sc.w, n, &z, &mut wz);
        matvec(&sc.winv, n, &s, &mut wis);
        assert!(close(&wz, &wis, 1e-12), "{wz:?} vs {wis:?}");
        // W W^{-1} = I
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| sc.w[i * n + k] * sc.winv[k * n + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let l = [2.0, 0.5, -0.3];
        let x = [0.7, -1.0, 2.0];
        let mut d = [0.0; 3];
        soc_prod(&l, &x, &mut d);
        let mut back = [0.0; 3];
        soc_div(&l, &d, &mut back);
        assert!(close(&back, &x, 1e-13));
    }

    #[test]
    fn max_step_reaches_boundary() {
        let u = [1.0, 0.0, 0.0];
        let d = [-1.0, 1.0, 0.0];
        let a = soc_max_step(&u, &d);
        // (1-a) = a  ->  a = 0.5
        assert!((a - 0.5).abs() < 1e-14);
        assert!(soc_max_step(&u, &[1.0, 0.5, 0.0]).is_infinite());
        let a = soc_max_step(&u, &[0.0, 2.0, 0.0]);
        assert!((a - 0.5).abs() < 1e-14);
    }
}
