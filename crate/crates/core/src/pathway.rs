//! Intracellular pathway: receptor activity, adaptation rate, tumbling
//! frequency, and the bulk tumbling kernels of the limiting kinetic model.
//!
//! The internal state enters through the offset `r = m - M` or its blow-up
//! version `y = r / epsilon`. Adaptation follows `f(r) = 1 - a(r)/a0` with
//! activity `a(r) = (1 + exp(-N alpha r))^{-1}`, so `f` is restoring and
//! `f(r) = -r G(r)` with `G(0) = N alpha / (4 a0)`. The tumbling frequency is
//! a Hill response of the activity,
//! `Lambda(y) = z0 + tau^{-1} a0^{-H} (1 + exp(-N alpha sigma y))^{-H}`,
//! increasing in `y` between `lambda_minus = z0` and
//! `lambda_plus = z0 + tau^{-1} a0^{-H}`. A cell running into an increasing
//! signal has `m` lagging `M` (`y < 0`), hence tumbles less and runs longer.
//!
//! In the vanishing-`epsilon` limit the tumbling rate seen by the population
//! becomes a function of the path-wise signal derivative `u = D_t M` alone:
//! `T(u) = Lambda(-u/G(0))` without methylation noise, and the Gaussian
//! average of `Lambda` centered at `-u/G(0)` with variance `1/G(0)` with it.
//! Both are strictly decreasing in `u` (run extension).

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use serde::{Deserialize, Serialize};

/// Clamp the exponent so `exp` never overflows; the clamp is far outside any
/// range where it changes a double-precision result.
#[inline]
pub(crate) fn exp_clamped(x: f64) -> f64 {
    x.clamp(-700.0, 700.0).exp()
}

/// Pathway constants plus the derived kernel bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayParams {
    /// Number of tightly coupled receptors.
    pub n_receptors: u32,
    /// Receptor gain (dimensionless).
    pub alpha: f64,
    /// Preferred activity; the adaptation rate vanishes at `a = a0`.
    pub a0: f64,
    /// Rotational diffusion floor of the tumbling rate (1/s).
    pub z0: f64,
    /// Mean run time (s).
    pub tau: f64,
    /// Hill coefficient of the motor response curve.
    pub hill: f64,
    /// Response stiffness in the blow-up coordinate (dimensionless).
    pub sigma: f64,
    /// Scale separation between adaptation and system time.
    pub epsilon: f64,
    /// Whether methylation noise (diffusion in `m`) is active.
    pub noise_enabled: bool,
}

impl Default for PathwayParams {
    fn default() -> Self {
        Self {
            n_receptors: 6,
            alpha: 1.7,
            a0: 0.5,
            z0: 0.14,
            tau: 0.8,
            hill: 10.0,
            sigma: 1.0,
            epsilon: 0.1,
            noise_enabled: false,
        }
    }
}

impl PathwayParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_receptors < 1 {
            return Err(Error::Config("N must be an integer >= 1".into()));
        }
        if !(self.a0 > 0.0 && self.a0 < 1.0) {
            return Err(Error::Config(format!("a0 must lie in (0,1), got {}", self.a0)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.z0 > 0.0) {
            return Err(Error::Config(format!("z0 must be > 0, got {}", self.z0)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.hill >= 1.0) {
            return Err(Error::Config(format!("H must be >= 1, got {}", self.hill)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e3) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// `N * alpha`, the logistic steepness in the offset `r`.
    #[inline]
    fn k(&self) -> f64 {
        self.n_receptors as f64 * self.alpha
    }

    /// Lower tumbling bound `lambda_minus = z0`.
    pub fn lambda_minus(&self) -> f64 {
        self.z0
    }

    /// Upper tumbling bound `lambda_plus = z0 + tau^{-1} a0^{-H}`.
    pub fn lambda_plus(&self) -> f64 {
        self.z0 + self.a0.powf(-self.hill) / self.tau
    }

    /// `G(0) = -f'(0) = N alpha / (4 a0)`.
    pub fn g0(&self) -> f64 {
        self.k() / (4.0 * self.a0)
    }

    /// Receptor activity `a = (1 + exp(-N alpha (m - M)))^{-1}` in (0,1).
    pub fn activity(&self, m: f64, m_eq: f64) -> f64 {
        1.0 / (1.0 + exp_clamped(-self.k() * (m - m_eq)))
    }

    /// Normalized adaptation rate `f(r) = 1 - a(r)/a0`; restoring, bounded in
    /// `(1 - 1/a0, 1)`.
    pub fn adaptation_f(&self, r: f64) -> f64 {
        1.0 - self.activity(r, 0.0) / self.a0
    }

    /// `G(r) = -f(r)/r`, continued through the removable singularity at
    /// `r = 0` by its Taylor expansion (valid when `f(0) = 0`, i.e. `a0 = 1/2`;
    /// otherwise the `f(0)/r` part is kept explicitly).
    pub fn g_of(&self, r: f64) -> f64 {
        if r == 0.0 {
            // G(0) defined as -f'(0) regardless of the a0 normalization.
            return self.g0();
        }
        if r.abs() < 1e-4 {
            let k = self.k();
            let f_at_zero = 1.0 - 1.0 / (2.0 * self.a0);
            let series = self.g0() - k.powi(3) * r * r / (48.0 * self.a0)
                + k.powi(5) * r.powi(4) / (480.0 * self.a0);
            return series - f_at_zero / r;
        }
        -self.adaptation_f(r) / r
    }

    /// Tumbling frequency as a function of the blow-up offset `y`;
    /// strictly increasing from `z0` to `z0 + tau^{-1} a0^{-H}`.
    #[inline]
    pub fn lambda_y(&self, y: f64) -> f64 {
        self.tumble_rate().at(y)
    }

    /// Precomputed form of the tumbling frequency for hot loops.
    pub fn tumble_rate(&self) -> TumbleRate {
        TumbleRate {
            z0: self.z0,
            ksig: self.k() * self.sigma,
            scale: self.a0.powf(-self.hill) / self.tau,
            hill_i: if self.hill.fract() == 0.0 && self.hill <= 64.0 {
                Some(self.hill as i32)
            } else {
                None
            },
            hill: self.hill,
        }
    }

    /// Limiting bulk kernel without noise: `T(u) = Lambda(-u/G(0))`,
    /// strictly decreasing in `u`, bounded in `(lambda_minus, lambda_plus)`.
    pub fn kernel_deterministic(&self, u: f64) -> f64 {
        self.lambda_y(-u / self.g0())
    }

    /// Limiting bulk kernel with methylation noise: Gaussian average of
    /// `Lambda` centered at `-u/G(0)` with variance `1/G(0)`.
    pub fn kernel_noise(&self, u: f64, quad: &GaussHermite) -> f64 {
        let g0 = self.g0();
        quad.gaussian_mean(-u / g0, 1.0 / g0, |y| self.lambda_y(y))
    }

    /// Convenience wrapper building the quadrature rule for a given order.
    pub fn kernel_noise_order(&self, u: f64, order: usize) -> Result<f64> {
        Ok(self.kernel_noise(u, &GaussHermite::new(order)?))
    }

    /// Min and max of `G(epsilon y)` over a `y` range, reported per run as
    /// the effective bounds on the truncated internal domain.
    pub fn g_bounds_on(&self, y_lo: f64, y_hi: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=1024 {
            let y = y_lo + (y_hi - y_lo) * i as f64 / 1024.0;
            let g = self.g_of(self.epsilon * y);
            lo = lo.min(g);
            hi = hi.max(g);
        }
        (lo, hi)
    }
}

/// Tumbling frequency with the Hill prefactor and exponent hoisted out of
/// the per-evaluation path.
#[derive(Debug, Clone, Copy)]
pub struct TumbleRate {
    z0: f64,
    ksig: f64,
    scale: f64,
    hill_i: Option<i32>,
    hill: f64,
}

impl TumbleRate {
    #[inline]
    pub fn at(&self, y: f64) -> f64 {
        let base = 1.0 + exp_clamped(-self.ksig * y);
        let hill_term = match self.hill_i {
            Some(h) => base.powi(-h),
            None => base.powf(-self.hill),
        };
        self.z0 + hill_term * self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};

    fn params() -> PathwayParams {
        PathwayParams::default()
    }

    #[test]
    fn activity_at_equilibrium_is_half() {
        let p = params();
        assert_eq!(p.activity(2.5, 2.5), 0.5);
    }

    #[test]
    fn activity_saturates_and_matches_direct_evaluation() {
        let p = params();
        assert_abs_diff_eq!(p.activity(100.0, 0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.activity(-100.0, 0.0), 0.0, epsilon = 1e-12);
        // N alpha (m - M) = 6 * 1.7 * 0.1 = 1.02, a = (1 + e^{-1.02})^{-1}.
        let expected = 1.0 / (1.0 + (-1.02_f64).exp());
        assert_relative_eq!(p.activity(0.1, 0.0), expected, max_relative = 1e-12);
        assert_abs_diff_eq!(p.activity(0.1, 0.0), 0.7350, epsilon = 5e-5);
    }

    #[test]
    fn activity_is_increasing_in_m() {
        let p = params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = rng.gen_range(-3.0..3.0);
            let b = a + rng.gen_range(1e-6..1.0);
            assert!(p.activity(b, 0.0) > p.activity(a, 0.0));
        }
    }

    #[test]
    fn adaptation_vanishes_at_zero_and_is_restoring() {
        let p = params();
        assert_eq!(p.adaptation_f(0.0), 0.0);
        assert_abs_diff_eq!(p.adaptation_f(-50.0), 1.0, epsilon = 1e-12);
        for r in [-2.0, -0.3, -1e-3, 1e-3, 0.3, 2.0] {
            assert!(r * p.adaptation_f(r) < 0.0, "f not restoring at r={r}");
        }
    }

    #[test]
    fn adaptation_slope_matches_finite_difference() {
        let p = params();
        let h = 1e-6;
        let slope = (p.adaptation_f(h) - p.adaptation_f(-h)) / (2.0 * h);
        assert_relative_eq!(slope, -5.1, max_relative = 1e-8);
        assert_relative_eq!(slope, -p.g0(), max_relative = 1e-8);
    }

    #[test]
    fn g_at_zero_is_exact() {
        let p = params();
        assert_abs_diff_eq!(p.g0(), 5.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.g_of(0.0), 5.1, epsilon = 1e-12);
    }

    #[test]
    fn g_series_matches_direct_ratio_near_zero() {
        let p = params();
        for r in [1e-6, -1e-6, 5e-5, -9e-5] {
            let direct = -p.adaptation_f(r) / r;
            assert_relative_eq!(p.g_of(r), direct, max_relative = 1e-6);
        }
        // Continuity across the series switch.
        assert_relative_eq!(p.g_of(0.99e-4), p.g_of(1.01e-4), max_relative = 1e-7);
    }

    #[test]
    fn g_monotone_decreasing_on_positive_range() {
        let p = params();
        let mut prev = p.g_of(0.0);
        for i in 1..=2000 {
            let g = p.g_of(2.0 * i as f64 / 2000.0);
            assert!(g < prev, "G not decreasing at r={}", 2.0 * i as f64 / 2000.0);
            assert!(g > 0.0);
            prev = g;
        }
    }

    #[test]
    fn g_consistency_with_f() {
        let p = params();
        for r in [-3.0, -0.5, -2e-4, 2e-4, 0.5, 3.0] {
            assert_abs_diff_eq!(p.adaptation_f(r) + r * p.g_of(r), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn lambda_reference_points() {
        let p = params();
        // At y = 0 with a0 = 1/2 the Hill term is exactly tau^{-1}.
        assert_abs_diff_eq!(p.lambda_y(0.0), 1.39, epsilon = 1e-12);
        // Far negative offset: activity -> 0, only rotational diffusion left.
        assert_abs_diff_eq!(p.lambda_y(-1e3), 0.14, epsilon = 1e-15);
        // Far positive offset: saturated Hill response.
        assert_abs_diff_eq!(p.lambda_y(1e3), 1280.14, epsilon = 1e-9);
        assert_abs_diff_eq!(p.lambda_plus(), 1280.14, epsilon = 1e-9);
        assert_eq!(p.lambda_minus(), 0.14);
    }

    #[test]
    fn lambda_strictly_inside_bounds_and_increasing() {
        let p = params();
        let (lo, hi) = (p.lambda_minus(), p.lambda_plus());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        // Wide range: bounds hold (the Hill term saturates to the exact
        // bound in double precision once it falls below ~1e-17 z0).
        for _ in 0..10_000 {
            let l = p.lambda_y(rng.gen_range(-50.0..50.0));
            assert!((lo..=hi).contains(&l));
        }
        // Range where doubles still resolve the Hill term: strict bounds and
        // strict monotonicity on an even grid.
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let y = -0.4 + 2.9 * i as f64 / 10_000.0;
            let l = p.lambda_y(y);
            assert!(l > lo && l < hi, "Lambda({y}) = {l} outside ({lo}, {hi})");
            assert!(l > prev, "Lambda not increasing at y={y}");
            prev = l;
        }
    }

    #[test]
    fn deterministic_kernel_reference_and_monotonicity() {
        let p = params();
        assert_abs_diff_eq!(p.kernel_deterministic(0.0), 1.39, epsilon = 1e-12);
        // Run extension: T non-increasing over a wide range and strictly
        // decreasing where doubles resolve the Hill term.
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let u = -5.0 + 10.0 * i as f64 / 100.0;
            let t = p.kernel_deterministic(u);
            assert!(t <= prev, "T increased at u={u}");
            assert!(t >= p.lambda_minus() && t <= p.lambda_plus());
            prev = t;
        }
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let u = -2.0 + 4.0 * i as f64 / 100.0;
            let t = p.kernel_deterministic(u);
            assert!(t < prev, "T not strictly decreasing at u={u}");
            prev = t;
        }
        // Strong increasing signal: rate drops to the rotational floor.
        assert_abs_diff_eq!(p.kernel_deterministic(1e4), p.lambda_minus(), epsilon = 1e-12);
    }

    #[test]
    fn noise_kernel_is_exact_for_constant_and_affine_rates() {
        let quad = GaussHermite::new(64).unwrap();
        let g0 = params().g0();
        for u in [-2.0, 0.0, 1.5] {
            let c = quad.gaussian_mean(-u / g0, 1.0 / g0, |_| 3.25);
            assert_relative_eq!(c, 3.25, max_relative = 1e-14);
            let a = quad.gaussian_mean(-u / g0, 1.0 / g0, |y| 2.0 + 0.7 * y);
            assert_relative_eq!(a, 2.0 - 0.7 * u / g0, max_relative = 1e-12);
        }
    }

    #[test]
    fn noise_kernel_agrees_with_trapezoid_oracle() {
        // Oracle: dense trapezoid of Lambda(y) * Gaussian on [-20, 20].
        // The Hill response has logistic poles at |Im y| = pi/(N alpha sigma),
        // which limits order-64 Gauss-Hermite to ~1e-4 relative accuracy here.
        let p = params();
        let g0 = p.g0();
        let u = 0.0;
        let n = 1_000_000usize;
        let (a, b) = (-20.0, 20.0);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let y = a + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * p.lambda_y(y) * (-(g0 / 2.0) * (y + u / g0).powi(2)).exp();
        }
        let oracle = (g0 / (2.0 * std::f64::consts::PI)).sqrt() * acc * h;
        let gh = p.kernel_noise_order(u, 64).unwrap();
        assert_relative_eq!(gh, oracle, max_relative = 2e-4);
    }

    #[test]
    fn noise_kernel_unsupported_order() {
        let p = params();
        assert!(p.kernel_noise_order(0.0, 1000).is_err());
    }

    #[test]
    fn shrinking_noise_variance_recovers_deterministic_kernel() {
        let p = params();
        let quad = GaussHermite::new(64).unwrap();
        let g0 = p.g0();
        for i in 0..10 {
            let u = -2.0 + 4.0 * i as f64 / 9.0;
            let t_det = p.kernel_deterministic(u);
            let mut errs = Vec::new();
            for kappa in [1.0, 0.1, 0.01] {
                let t_k = quad.gaussian_mean(-u / g0, kappa / g0, |y| p.lambda_y(y));
                errs.push((t_k - t_det).abs());
            }
            assert!(
                errs[0] > errs[1] && errs[1] > errs[2],
                "noise-kernel error not shrinking at u={u}: {errs:?}"
            );
            assert!(errs[2] < 0.2 * errs[0], "kappa=0.01 error not small at u={u}: {errs:?}");
        }
    }

    #[test]
    fn parameter_validation() {
        let mut p = params();
        p.a0 = 1.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.hill = 0.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.epsilon = 0.0;
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }
}
