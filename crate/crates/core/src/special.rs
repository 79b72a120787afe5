//! Gamma function helpers used by the series kernel.

/// ln Γ(x) for x > 0.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// Γ(x) evaluated directly where it is representable, through the log otherwise.
#[inline]
pub fn gamma(x: f64) -> f64 {
    if x < 171.0 {
        libm::tgamma(x)
    } else {
        ln_gamma(x).exp()
    }
}

/// 1/Γ(x) for x > 0, underflowing gracefully to zero for large arguments.
#[inline]
pub fn recip_gamma(x: f64) -> f64 {
    if x < 171.0 {
        1.0 / libm::tgamma(x)
    } else {
        (-ln_gamma(x)).exp()
    }
}
