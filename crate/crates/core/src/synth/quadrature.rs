use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::Result;
use crate::freqdata::{ensure_same_grid, ComplexResponse, FrequencyGrid};

/// Weights `tau_k` with `sum_k tau_k h_k ~ (Ts / 2 pi) * integral over
/// [-pi/Ts, pi/Ts] of h`, for `h` even in frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    pub tau: Vec<f64>,
}

impl QuadratureWeights {
    pub fn sum(&self, h: impl IntoIterator<Item = f64>) -> f64 {
        self.tau.iter().zip(h).map(|(t, v)| t * v).sum()
    }
}

pub fn quadrature(grid: &FrequencyGrid) -> QuadratureWeights {
    let n = grid.len();
    let ts = grid.ts();
    let w: Vec<f64> = grid.freqs().iter().map(|f| 2.0 * PI * f).collect();
    let tau = (0..n)
        .map(|k| {
            let lo = if k > 0 { w[k - 1] } else { w[k] };
            let hi = if k + 1 < n { w[k + 1] } else { w[k] };
            ts / PI * (hi - lo) / 2.0
        })
        .collect();
    QuadratureWeights { tau }
}

/// `sum_k tau_k |T_k D_k|^2`.
pub fn h2_of(channel: &ComplexResponse, spectrum: &ComplexResponse, tau: &QuadratureWeights) -> Result<f64> {
    ensure_same_grid(channel.grid(), spectrum.grid())?;
    Ok(tau.sum(channel.values().iter().zip(spectrum.values()).map(|(t, d)| (t * d).norm_sqr())))
}

pub(crate) fn weighted_energy(tau: &QuadratureWeights, v: impl IntoIterator<Item = Complex64>) -> f64 {
    tau.sum(v.into_iter().map(|c| c.norm_sqr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn three_point_uniform_grid() {
        let ts = 1e-3;
        let b = 500.0;
        let g = FrequencyGrid::new(ts, vec![0.0, b / 2.0, b]).unwrap();
        let q = quadrature(&g);
        let want = [b / 4.0, b / 2.0, b / 4.0].map(|v| ts / PI * 2.0 * PI * v);
        for (a, e) in q.tau.iter().zip(want) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
        // full band: sums to one
        assert!((q.tau.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonuniform_weights_sum_to_covered_band() {
        let ts = 1.0 / 50400.0;
        let g = FrequencyGrid::new(ts, vec![10.0, 20.0, 400.0, 401.0, 9000.0]).unwrap();
        let q = quadrature(&g);
        let want = ts / PI * 2.0 * PI * (9000.0 - 10.0);
        assert!((q.tau.iter().sum::<f64>() - want).abs() < 1e-13);
        assert!(q.tau.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn first_order_filter_norm() {
        let ts = 1e-4;
        let g = Arc::new(FrequencyGrid::uniform(ts, 0.0, 0.5 / ts, 4096).unwrap());
        let t = ComplexResponse::from_fn(g.clone(), |k, _| 1.0 / (g.z(k) - 0.5)).unwrap();
        let d = ComplexResponse::constant(g.clone(), Complex64::new(1.0, 0.0));
        let v = h2_of(&t, &d, &quadrature(&g)).unwrap();
        assert!((v / (4.0 / 3.0) - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn zero_spectrum_has_zero_norm() {
        let g = Arc::new(FrequencyGrid::uniform(1e-3, 0.0, 500.0, 11).unwrap());
        let t = ComplexResponse::constant(g.clone(), Complex64::new(3.0, 1.0));
        let d = ComplexResponse::constant(g.clone(), Complex64::new(0.0, 0.0));
        assert_eq!(h2_of(&t, &d, &quadrature(&g)).unwrap(), 0.0);
        let one = ComplexResponse::constant(g.clone(), Complex64::new(1.0, 0.0));
        assert!((h2_of(&one, &one, &quadrature(&g)).unwrap() - 1.0).abs() < 1e-14);
    }
}
