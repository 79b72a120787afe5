//! Brute-force references kept apart from the main evaluators: plain series
//! summation, a graded-mesh midpoint rule and Riemann–Liouville monomial
//! closed forms. Gamma values come from `statrs` rather than `libm`.

use statrs::function::gamma::{gamma, ln_gamma};

/// Kernel parameters for the oracle, with σ supplied as a plain function.
pub struct OracleKernel<'a> {
    pub rho: f64,
    pub lambda: f64,
    pub omega: f64,
    pub sigma: &'a dyn Fn(usize) -> f64,
}

const MAX_TERMS: usize = 20_000;

/// Coefficients σ(k)/Γ(ρk+λ) summed directly until the terms at `max_abs_z`
/// stay below 1e-18 of the running total for a stretch past their peak.
fn series_coefficients(k: &OracleKernel<'_>, max_abs_z: f64) -> Vec<f64> {
    let mut coeffs = Vec::new();
    let mut total = 0.0f64;
    let mut small_run = 0;
    let mut prev = f64::INFINITY;
    for i in 0..MAX_TERMS {
        let arg = k.rho * i as f64 + k.lambda;
        let ln_mag = ln_gamma(arg);
        let c = (k.sigma)(i) * (-ln_mag).exp();
        coeffs.push(c);
        let term = if max_abs_z == 0.0 {
            if i == 0 { c.abs() } else { 0.0 }
        } else {
            (i as f64 * max_abs_z.ln() - ln_mag).exp() * (k.sigma)(i)
        };
        total += term;
        if term <= 1e-18 * total.max(1e-300) && term <= prev {
            small_run += 1;
            if small_run >= 8 {
                break;
            }
        } else {
            small_run = 0;
        }
        prev = term;
    }
    coeffs
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// Direct summation of F^σ_{ρ,λ}(z).
pub fn raina_direct(k: &OracleKernel<'_>, z: f64) -> f64 {
    horner(&series_coefficients(k, z.abs()), z)
}

/// Midpoint approximation of the generalized fractional integral of `path`
/// with base point `base` evaluated at `x` (left-sided when x > base,
/// right-sided when x < base).
///
/// With r = |x - t| and s = r^λ the integral becomes
/// `(1/λ) ∫_0^{L^λ} F[ω r^ρ] X(t) ds`; uniform midpoints in s form the graded
/// mesh r_i = L (i/n)^(1/λ) in the original variable.
pub fn riemann_frac_integral(
    kernel: &OracleKernel<'_>,
    path: &dyn Fn(f64) -> f64,
    base: f64,
    x: f64,
    n_nodes: usize,
) -> f64 {
    let len = (x - base).abs();
    let dir = if x > base { -1.0 } else { 1.0 };
    let lam = kernel.lambda;
    let max_z = kernel.omega.abs() * len.powf(kernel.rho);
    let coeffs = series_coefficients(kernel, max_z);
    let s_max = len.powf(lam);
    let h = s_max / n_nodes as f64;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for i in 0..n_nodes {
        let s = (i as f64 + 0.5) * h;
        let r = s.powf(1.0 / lam);
        let term = horner(&coeffs, kernel.omega * r.powf(kernel.rho)) * path(x + dir * r);
        // Kahan summation keeps 10^6-node sums clean.
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum * h / lam
}

/// Riemann–Liouville integral of order α of (t - base)^m, evaluated at x:
/// `Γ(m+1) (x-base)^(m+α) / Γ(m+1+α)`.
pub fn rl_monomial(alpha: f64, m: u32, base: f64, x: f64) -> f64 {
    let m = m as f64;
    gamma(m + 1.0) * (x - base).powf(m + alpha) / gamma(m + 1.0 + alpha)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of p(t) re-expanded in powers of (t - c).
fn expand_about(coeffs: &[f64], c: f64) -> Vec<f64> {
    (0..coeffs.len())
        .map(|j| {
            (j..coeffs.len())
                .map(|n| coeffs[n] * binomial(n, j) * c.powi((n - j) as i32))
                .sum()
        })
        .collect()
}

/// Left RL integral I^α_{u+}[p](x) of a polynomial with ascending coefficients.
pub fn rl_polynomial_left(alpha: f64, coeffs: &[f64], u: f64, x: f64) -> f64 {
    expand_about(coeffs, u)
        .iter()
        .enumerate()
        .map(|(m, d)| d * rl_monomial(alpha, m as u32, u, x))
        .sum()
}

/// Right RL integral I^α_{v-}[p](x) = (1/Γ(α)) ∫_x^v (t-x)^(α-1) p(t) dt.
pub fn rl_polynomial_right(alpha: f64, coeffs: &[f64], v: f64, x: f64) -> f64 {
    // p(t) = Σ d_m (t - v)^m = Σ d_m (-1)^m (v - t)^m, and the right integral
    // of (v - t)^m at x mirrors the left integral of (t - x)^m at v.
    expand_about(coeffs, v)
        .iter()
        .enumerate()
        .map(|(m, d)| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * d * rl_monomial(alpha, m as u32, x, v)
        })
        .sum()
}

/// Γ(α+1) / (2 (v-u)^α) · [I^α_{u+}[p](v) + I^α_{v-}[p](u)].
pub fn rl_hh_middle(alpha: f64, coeffs: &[f64], u: f64, v: f64) -> f64 {
    let sum = rl_polynomial_left(alpha, coeffs, u, v) + rl_polynomial_right(alpha, coeffs, v, u);
    gamma(alpha + 1.0) * sum / (2.0 * (v - u).powf(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(k: usize) -> f64 {
        if k == 0 { 1.0 } else { 0.0 }
    }

    fn rl(alpha: f64) -> OracleKernel<'static> {
        OracleKernel {
            rho: 1.0,
            lambda: alpha,
            omega: 0.0,
            sigma: &one,
        }
    }

    #[test]
    fn direct_series_values() {
        let ones = |_: usize| 1.0;
        let k = OracleKernel { rho: 1.0, lambda: 1.0, omega: 1.0, sigma: &ones };
        assert!((raina_direct(&k, 1.0) - std::f64::consts::E).abs() < 1e-14);
        let k = OracleKernel { rho: 2.0, lambda: 2.0, omega: 1.0, sigma: &ones };
        assert!((raina_direct(&k, 1.0) - 1f64.sinh()).abs() < 1e-14);
    }

    #[test]
    fn riemann_examples() {
        let k1 = rl(1.0);
        assert!((riemann_frac_integral(&k1, &|_| 1.0, 0.0, 1.0, 10_000) - 1.0).abs() < 1e-4);
        assert!((riemann_frac_integral(&k1, &|t| t, 0.0, 1.0, 10_000) - 0.5).abs() < 1e-4);
        // RL weight is (x-t)^(α-1)/Γ(α); with σ(0)=1, ω=0 the kernel already carries 1/Γ(λ).
        let kh = rl(0.5);
        let v = riemann_frac_integral(&kh, &|t| t * t, 0.0, 1.0, 1_000_000);
        let expect = gamma(3.0) / gamma(3.5);
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
        assert!((expect - 0.601_802_222_450_940_2).abs() < 1e-13);
    }

    #[test]
    fn monomial_closed_forms() {
        assert!((rl_monomial(1.0, 0, 0.3, 1.3) - 1.0).abs() < 1e-15);
        assert!((rl_monomial(1.0, 1, 0.0, 2.0) - 2.0).abs() < 1e-14);
        let kh = rl(0.5);
        let brute = riemann_frac_integral(&kh, &|t: f64| (t - 0.2).powi(2), 0.2, 1.5, 1_000_000);
        assert!((brute - rl_monomial(0.5, 2, 0.2, 1.5)).abs() < 1e-6);
    }

    #[test]
    fn error_shrinks_at_least_fivefold_per_decade() {
        for alpha in [0.3, 0.5, 1.0, 1.7, 2.5] {
            let k = rl(alpha);
            let exact = rl_monomial(alpha, 2, 0.0, 1.0);
            let path = |t: f64| t * t;
            let e3 = (riemann_frac_integral(&k, &path, 0.0, 1.0, 1_000) - exact).abs();
            let e4 = (riemann_frac_integral(&k, &path, 0.0, 1.0, 10_000) - exact).abs();
            assert!(e3 / e4 >= 5.0, "alpha={alpha}: {e3} -> {e4}");
        }
    }

    #[test]
    fn rl_polynomial_sides() {
        // X = t² on [0, 1], α = 0.5: right integral at 0 is 0.4/√π
        let c = [0.0, 0.0, 1.0];
        let r = rl_polynomial_right(0.5, &c, 1.0, 0.0);
        assert!((r - 0.4 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
        let l = rl_polynomial_left(0.5, &c, 0.0, 1.0);
        assert!((l - gamma(3.0) / gamma(3.5)).abs() < 1e-14);
        // classical middle for α = 1 is the mean value 1/3
        assert!((rl_hh_middle(1.0, &c, 0.0, 1.0) - 1.0 / 3.0).abs() < 1e-14);
        let mid = rl_hh_middle(0.5, &c, 0.0, 1.0);
        assert!((mid - 0.366_666_666_666_666_7).abs() < 1e-12, "{mid}");
    }
}
