//! Gauss-Hermite quadrature for integrals of the form
//! `int f(x) exp(-x^2) dx` over the real line.
//!
//! Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix
//! (zero diagonal, off-diagonal `sqrt(k/2)`), located by Sturm bisection and
//! polished with Newton steps on the orthonormal Hermite recurrence. Weights
//! use the Christoffel identity `w_i = 1 / sum_k p_k(x_i)^2`.

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 256;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Orthonormal Hermite values `(p_n(x), p_{n-1}(x))` for weight `exp(-x^2)`.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut pkm1 = std::f64::consts::PI.powf(-0.25);
    let mut pk = std::f64::consts::SQRT_2 * x * pkm1;
    if n == 1 {
        return (pk, pkm1);
    }
    for k in 1..n {
        let pkp1 = x * (2.0 / (k as f64 + 1.0)).sqrt() * pk
            - (k as f64 / (k as f64 + 1.0)).sqrt() * pkm1;
        pkm1 = pk;
        pk = pkp1;
    }
    (pk, pkm1)
}

/// Number of Jacobi-matrix eigenvalues strictly below `x` (Sturm count).
fn sturm_count(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..n {
        let e2 = k as f64 / 2.0; // off-diagonal squared
        let denom = if q == 0.0 { 1e-300 } else { q };
        q = -x - e2 / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        let n = order;
        let bound = 2.0 * ((n as f64 - 1.0) / 2.0).sqrt() + 1.0;
        let mut nodes = vec![0.0; n];

        // Upper half by bisection + Newton; mirror for the lower half.
        for j in (n + 1) / 2..n {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if sturm_count(n, mid) <= j {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 * bound {
                    break;
                }
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..8 {
                let (pn, pnm1) = hermite_pair(n, x);
                let dpn = (2.0 * n as f64).sqrt() * pnm1;
                if dpn == 0.0 {
                    break;
                }
                let step = pn / dpn;
                let xn = x - step;
                if xn > lo && xn < hi {
                    x = xn;
                } else {
                    break;
                }
                if step.abs() < 1e-16 * bound {
                    break;
                }
            }
            nodes[j] = x;
            nodes[n - 1 - j] = -x;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }

        let weights = nodes
            .iter()
            .map(|&x| {
                let mut sum;
                let mut pkm1 = std::f64::consts::PI.powf(-0.25);
                let mut pk = std::f64::consts::SQRT_2 * x * pkm1;
                sum = pkm1 * pkm1 + pk * pk;
                for k in 1..n - 1 {
                    let pkp1 = x * (2.0 / (k as f64 + 1.0)).sqrt() * pk
                        - (k as f64 / (k as f64 + 1.0)).sqrt() * pkm1;
                    pkm1 = pk;
                    pk = pkp1;
                    sum += pk * pk;
                }
                1.0 / sum
            })
            .collect();

        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_weights(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    /// `int f(x) exp(-x^2) dx`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Expectation of `f` under a Gaussian with the given mean and variance.
    pub fn gaussian_mean<F: Fn(f64) -> f64>(&self, mean: f64, variance: f64, f: F) -> f64 {
        let s = (2.0 * variance).sqrt();
        let inv = 1.0 / std::f64::consts::PI.sqrt();
        self.integrate(|x| f(mean + s * x)) * inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_moments() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for order in [2, 5, 16, 64, 128, 256] {
            let q = GaussHermite::new(order).unwrap();
            assert_relative_eq!(q.integrate(|_| 1.0), sqrt_pi, max_relative = 1e-13);
            assert_relative_eq!(q.integrate(|x| x * x), sqrt_pi / 2.0, max_relative = 1e-12);
            if order >= 3 {
                assert_relative_eq!(
                    q.integrate(|x| x.powi(4)),
                    0.75 * sqrt_pi,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn exact_for_low_degree_polynomials() {
        // Order n integrates degree <= 2n-1 exactly: check x^8 with n = 5.
        // int x^8 e^{-x^2} = (7!!/2^4) sqrt(pi) = 105/16 sqrt(pi).
        let q = GaussHermite::new(5).unwrap();
        let expected = 105.0 / 16.0 * std::f64::consts::PI.sqrt();
        assert_relative_eq!(q.integrate(|x| x.powi(8)), expected, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_mean_of_affine_is_exact() {
        let q = GaussHermite::new(2).unwrap();
        let m = q.gaussian_mean(1.5, 0.3, |y| 2.0 - 4.0 * y);
        assert_relative_eq!(m, 2.0 - 4.0 * 1.5, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_mean_matches_known_integral() {
        // E[cos(Y)] for Y ~ N(0, s^2) is exp(-s^2/2).
        let q = GaussHermite::new(32).unwrap();
        let var = 0.7;
        assert_relative_eq!(
            q.gaussian_mean(0.0, var, f64::cos),
            (-var / 2.0_f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_out_of_range_orders() {
        assert!(matches!(GaussHermite::new(1), Err(crate::Error::UnsupportedOrder(1))));
        assert!(matches!(GaussHermite::new(257), Err(crate::Error::UnsupportedOrder(257))));
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let q = GaussHermite::new(33).unwrap();
        let n = q.nodes.len();
        for i in 0..n {
            assert_eq!(q.nodes[i], -q.nodes[n - 1 - i]);
        }
        assert!(q.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(q.nodes[n / 2], 0.0);
    }
}
