//! Adaptive Gauss–Kronrod integration and Gauss–Jacobi rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::special::ln_gamma;

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureTol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureTol {
    fn default() -> Self {
        QuadratureTol {
            abs: 1e-9,
            rel: 1e-9,
            max_intervals: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 integration of `f` over `[a, b]`: the interval
/// with the largest error estimate is bisected until the summed estimate
/// meets `max(abs, rel * |value|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: QuadratureTol,
) -> Result<QuadratureResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(domain(format!("integration limits must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (value, error) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                estimate: total,
                error: total_err,
                tol: tol.abs,
            });
        }
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                estimate: total,
                error: total_err,
                tol: target,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at machine resolution; accept what we have.
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum in a fixed order to shed accumulated update roundoff.
    let mut segs = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segs.iter().map(|s| s.value).sum();
    let error = segs.iter().map(|s| s.error).sum();
    Ok(QuadratureResult {
        value,
        error,
        intervals: segs.len(),
    })
}

/// Gauss–Jacobi nodes and weights for `(1-x)^alpha (1+x)^beta` on [-1, 1],
/// via the Golub–Welsch eigenvalue method.
#[derive(Clone, Debug)]
pub struct GaussJacobi {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussJacobi {
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain("Gauss-Jacobi rule needs at least one node"));
        }
        if !(alpha > -1.0 && beta > -1.0) {
            return Err(domain(format!(
                "Gauss-Jacobi exponents must exceed -1, got ({alpha}, {beta})"
            )));
        }
        let ab = alpha + beta;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let k = i as f64;
            let denom = (2.0 * k + ab) * (2.0 * k + ab + 2.0);
            jac[(i, i)] = if i == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / denom
            };
            if i + 1 < n {
                let m = k + 1.0;
                let s = 2.0 * m + ab;
                let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
                let den = s * s * (s + 1.0) * (s - 1.0);
                let off = (num / den).sqrt();
                jac[(i, i + 1)] = off;
                jac[(i + 1, i)] = off;
            }
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0)
            + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(GaussJacobi {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Σ w_i f(x_i), approximating ∫_{-1}^{1} (1-x)^α (1+x)^β f(x) dx.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_integrals() {
        let r = integrate_adaptive(|x| x.sin(), 0.0, std::f64::consts::PI, QuadratureTol::default())
            .unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate_adaptive(|x| x * x, 0.0, 1.0, QuadratureTol::default()).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.intervals, 1);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let tol = QuadratureTol {
            abs: 1e-11,
            rel: 1e-11,
            max_intervals: 4000,
        };
        // ∫_0^1 x^{-1/2} dx = 2
        let r = integrate_adaptive(|x| x.powf(-0.5), 0.0, 1.0, tol).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
        // bounded but steep: ∫_0^1 x^{0.05} dx = 1/1.05
        let r = integrate_adaptive(|x| x.powf(0.05), 0.0, 1.0, tol).unwrap();
        assert!((r.value - 1.0 / 1.05).abs() < 1e-10);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let tol = QuadratureTol {
            abs: 1e-14,
            rel: 1e-14,
            max_intervals: 10,
        };
        let err = integrate_adaptive(|x| (1.0 / x).sin(), 1e-6, 1.0, tol).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn gauss_legendre_special_case() {
        let gl = GaussJacobi::new(5, 0.0, 0.0).unwrap();
        assert!((gl.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact for degree 9
        assert!((gl.apply(|x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_weight_integrals() {
        // ∫ (1+x)^{-1/2} dx = 2√2, ∫ x (1+x)^{-1/2} dx = -2√2/3
        let gj = GaussJacobi::new(12, 0.0, -0.5).unwrap();
        let s2 = 2f64.sqrt();
        assert!((gj.apply(|_| 1.0) - 2.0 * s2).abs() < 1e-13);
        assert!((gj.apply(|x| x) + 2.0 * s2 / 3.0).abs() < 1e-13);
        // Beta(2.3, 0.7) scaled: ∫ (1-x)^{-0.3}(1+x)^{1.3} dx = 2^2 B(0.7, 2.3)
        let gj = GaussJacobi::new(8, -0.3, 1.3).unwrap();
        let beta = (ln_gamma(0.7) + ln_gamma(2.3) - ln_gamma(3.0)).exp();
        assert!((gj.apply(|_| 1.0) - 4.0 * beta).abs() < 1e-13);
        assert!(GaussJacobi::new(4, -1.0, 0.0).is_err());
        assert!(GaussJacobi::new(0, 0.0, 0.0).is_err());
    }
}
