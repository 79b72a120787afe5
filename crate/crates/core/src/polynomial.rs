use serde::{Deserialize, Serialize};

/// Real polynomial with coefficients in ascending order of degree.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial(coeffs)
    }

    pub fn zero() -> Self {
        Polynomial(Vec::new())
    }

    /// `c t^power`
    pub fn monomial(c: f64, power: usize) -> Self {
        let mut v = vec![0.0; power + 1];
        v[power] = c;
        Polynomial(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Coefficient of t^j (zero past the stored length).
    pub fn coeff(&self, j: usize) -> f64 {
        self.0.get(j).copied().unwrap_or(0.0)
    }

    /// Index of the highest nonzero coefficient; zero for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        )
    }

    pub fn antiderivative(&self) -> Polynomial {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(0.0);
        v.extend(self.0.iter().enumerate().map(|(j, &c)| c / (j + 1) as f64));
        Polynomial(v)
    }

    /// ∫_a^b p(t) dt from the antiderivative.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let anti = self.antiderivative();
        anti.eval(b) - anti.eval(a)
    }

    /// Coefficients of q(s) = p(center + s) (Taylor shift).
    pub fn shifted(&self, center: f64) -> Polynomial {
        let mut c = self.0.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                c[j] += center * c[j + 1];
            }
        }
        Polynomial(c)
    }

    /// q(s) = p(-s).
    pub fn reflected(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .map(|(j, &c)| if j % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Polynomial {
        Polynomial(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.0.len().max(other.0.len());
        Polynomial((0..n).map(|j| self.coeff(j) + other.coeff(j)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_calculus() {
        let p = Polynomial::new(vec![1.0, -2.0, 3.0]); // 1 - 2t + 3t²
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative(), Polynomial::new(vec![-2.0, 6.0]));
        assert!((p.integrate(0.0, 1.0) - (1.0 - 1.0 + 1.0)).abs() < 1e-15);
        assert_eq!(p.degree(), 2);
        assert_eq!(Polynomial::zero().degree(), 0);
        assert_eq!(Polynomial::new(vec![1.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn taylor_shift() {
        // t² around 1: (1+s)² = 1 + 2s + s²
        let p = Polynomial::monomial(1.0, 2).shifted(1.0);
        assert_eq!(p.coeffs(), &[1.0, 2.0, 1.0]);
        let q = Polynomial::new(vec![0.5, -1.0, 0.25, 2.0, -0.75]);
        let s = q.shifted(-0.3);
        for t in [-1.0, 0.0, 0.4, 1.7] {
            assert!((s.eval(t) - q.eval(t - 0.3)).abs() < 1e-13);
        }
        let r = q.reflected();
        assert!((r.eval(0.6) - q.eval(-0.6)).abs() < 1e-15);
    }
}
