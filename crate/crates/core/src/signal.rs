//! Prescribed extracellular ligand field `S(x,t)`, the log-sensing
//! equilibrium methylation `M(x,t)` it induces, and the path-wise derivative
//! `D_t M = dM/dt + v dM/dx` experienced along a straight run.
//!
//! All fields are periodic in `x` with period `domain_length`. `M` is bounded
//! between `m_minus` and `m_plus`, which are computed once at construction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Log-sensing constants relating ligand concentration to equilibrium
/// methylation: `M(S) = m0 + f0(S)/alpha` with
/// `f0(S) = ln((1 + S/K_I)/(1 + S/K_A))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSensingParams {
    /// Basal methylation level (dimensionless).
    pub m0: f64,
    /// Receptor gain (dimensionless).
    pub alpha: f64,
    /// Dissociation constant of inactive receptors (uM).
    pub k_i: f64,
    /// Dissociation constant of active receptors (uM).
    pub k_a: f64,
}

impl Default for LogSensingParams {
    fn default() -> Self {
        Self {
            m0: 1.0,
            alpha: 1.7,
            k_i: 18.2,
            k_a: 3000.0,
        }
    }
}

impl LogSensingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_i > 0.0 && self.k_i < self.k_a) {
            return Err(Error::Config(format!(
                "log-sensing requires 0 < K_I < K_A, got K_I={} K_A={}",
                self.k_i, self.k_a
            )));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.m0 <= 0.0 {
            return Err(Error::Config(format!("m0 must be > 0, got {}", self.m0)));
        }
        Ok(())
    }
}

/// `f0(S) = ln((1 + S/K_I)/(1 + S/K_A))`, strictly increasing, `f0(0) = 0`.
pub fn f0(s: f64, p: &LogSensingParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("f0 requires S > 0, got {s}")));
    }
    Ok(((1.0 + s / p.k_i) / (1.0 + s / p.k_a)).ln())
}

/// `f0'(S) = 1/(S + K_I) - 1/(S + K_A)`.
fn f0_prime(s: f64, p: &LogSensingParams) -> f64 {
    1.0 / (s + p.k_i) - 1.0 / (s + p.k_a)
}

/// Shape of the ligand field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignalSpec {
    /// `S(x,t) = S0 + SA sin(2 pi (x - u t) / ell)`; the wavelength equals
    /// the domain length so the field is periodic.
    TravelingWave { s0: f64, sa: f64, ell: f64, u: f64 },
    /// Frozen spatial profile `S(x) = S0 + SA sin(2 pi x / ell)`.
    Static { s0: f64, sa: f64, ell: f64 },
    /// `M(x,t) = m0 + rate * t` prescribed directly (the ligand is held at
    /// `S0`); only defined for `t` in `[0, window]` so `M` stays bounded.
    UniformRamp {
        s0: f64,
        rate: f64,
        window: f64,
        domain_length: f64,
    },
    /// Static profile sampled at the given positions; evaluation outside the
    /// sampled support is a domain error, derivatives fall back to centered
    /// finite differences.
    Tabulated {
        xs: Vec<f64>,
        values: Vec<f64>,
        domain_length: f64,
    },
}

/// How the path-wise derivative is obtained for a given field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeAccuracy {
    Analytic,
    /// Centered finite differences; lower accuracy, flagged in run metadata.
    FiniteDifference,
}

/// A validated signal: spec, sensing constants, and the methylation bounds
/// `0 < m_minus <= M(x,t) <= m_plus` established at construction.
#[derive(Debug, Clone)]
pub struct SignalField {
    spec: SignalSpec,
    sensing: LogSensingParams,
    m_minus: f64,
    m_plus: f64,
}

impl SignalField {
    pub fn new(spec: SignalSpec, sensing: LogSensingParams) -> Result<Self> {
        sensing.validate()?;
        let (m_minus, m_plus) = match &spec {
            SignalSpec::TravelingWave { s0, sa, ell, .. } | SignalSpec::Static { s0, sa, ell } => {
                if !(*s0 > *sa && *sa >= 0.0) {
                    return Err(Error::Config(format!(
                        "wave signal requires S0 > SA >= 0, got S0={s0} SA={sa}"
                    )));
                }
                if !(*ell > 0.0) {
                    return Err(Error::Config(format!("wavelength must be > 0, got {ell}")));
                }
                // f0 >= 0 for S > 0, so m0 is a valid lower bound.
                (sensing.m0, sensing.m0 + f0(s0 + sa, &sensing)? / sensing.alpha)
            }
            SignalSpec::UniformRamp {
                s0, rate, window, domain_length,
            } => {
                if !(*s0 > 0.0) {
                    return Err(Error::Config(format!("ramp S0 must be > 0, got {s0}")));
                }
                if !(*window > 0.0 && *domain_length > 0.0) {
                    return Err(Error::Config(
                        "ramp window and domain length must be > 0".into(),
                    ));
                }
                let swing = rate * window;
                let lo = sensing.m0 + swing.min(0.0);
                let hi = sensing.m0 + swing.max(0.0);
                if lo <= 0.0 {
                    return Err(Error::Config(format!(
                        "ramp drives M to {lo} <= 0 within the window; shrink rate or window"
                    )));
                }
                (lo, hi)
            }
            SignalSpec::Tabulated {
                xs, values, domain_length,
            } => {
                if xs.len() != values.len() || xs.len() < 2 {
                    return Err(Error::Config(
                        "tabulated signal needs >= 2 samples with matching xs/values".into(),
                    ));
                }
                if !xs.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::Config("tabulated xs must be strictly increasing".into()));
                }
                if xs[0] < 0.0 || *xs.last().unwrap() > *domain_length {
                    return Err(Error::Config(
                        "tabulated xs must lie within [0, domain_length]".into(),
                    ));
                }
                let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
                for &s in values {
                    if !(s > 0.0) {
                        return Err(Error::Config(format!("tabulated S must be > 0, got {s}")));
                    }
                    smin = smin.min(s);
                    smax = smax.max(s);
                }
                (
                    sensing.m0 + f0(smin, &sensing)? / sensing.alpha,
                    sensing.m0 + f0(smax, &sensing)? / sensing.alpha,
                )
            }
        };
        Ok(Self { spec, sensing, m_minus, m_plus })
    }

    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    pub fn sensing(&self) -> &LogSensingParams {
        &self.sensing
    }

    /// Bounds `(m_minus, m_plus)` on `M` established at construction.
    pub fn m_bounds(&self) -> (f64, f64) {
        (self.m_minus, self.m_plus)
    }

    pub fn domain_length(&self) -> f64 {
        match &self.spec {
            SignalSpec::TravelingWave { ell, .. } | SignalSpec::Static { ell, .. } => *ell,
            SignalSpec::UniformRamp { domain_length, .. }
            | SignalSpec::Tabulated { domain_length, .. } => *domain_length,
        }
    }

    /// Wave speed of the co-moving frame (zero for non-traveling kinds).
    pub fn wave_speed(&self) -> f64 {
        match &self.spec {
            SignalSpec::TravelingWave { u, .. } => *u,
            _ => 0.0,
        }
    }

    pub fn derivative_accuracy(&self) -> DerivativeAccuracy {
        match &self.spec {
            SignalSpec::Tabulated { .. } => DerivativeAccuracy::FiniteDifference,
            _ => DerivativeAccuracy::Analytic,
        }
    }

    /// Ligand concentration `S(x,t)`, periodic in `x`.
    pub fn ligand(&self, x: f64, t: f64) -> Result<f64> {
        match &self.spec {
            SignalSpec::TravelingWave { s0, sa, ell, u } => {
                let phi = (x - u * t).rem_euclid(*ell);
                Ok(s0 + sa * (2.0 * std::f64::consts::PI * phi / ell).sin())
            }
            SignalSpec::Static { s0, sa, ell } => {
                let phi = x.rem_euclid(*ell);
                Ok(s0 + sa * (2.0 * std::f64::consts::PI * phi / ell).sin())
            }
            SignalSpec::UniformRamp { s0, .. } => Ok(*s0),
            SignalSpec::Tabulated { xs, values, domain_length } => {
                let xw = x.rem_euclid(*domain_length);
                let (first, last) = (xs[0], *xs.last().unwrap());
                if xw < first || xw > last {
                    return Err(Error::Domain(format!(
                        "tabulated signal support is [{first}, {last}], got x={xw}"
                    )));
                }
                let k = match xs.binary_search_by(|p| p.partial_cmp(&xw).unwrap()) {
                    Ok(i) => i.min(xs.len() - 2),
                    Err(i) => i - 1,
                };
                let w = (xw - xs[k]) / (xs[k + 1] - xs[k]);
                Ok(values[k] * (1.0 - w) + values[k + 1] * w)
            }
        }
    }

    /// Equilibrium methylation `M(x,t) = m0 + f0(S(x,t))/alpha` (the ramp
    /// kind prescribes `M = m0 + rate * t` directly).
    pub fn methylation(&self, x: f64, t: f64) -> Result<f64> {
        match &self.spec {
            SignalSpec::UniformRamp { rate, window, .. } => {
                if t > window * (1.0 + 1e-9) {
                    return Err(Error::Domain(format!(
                        "ramp signal defined for t <= {window}, got t={t}"
                    )));
                }
                Ok(self.sensing.m0 + rate * t)
            }
            _ => Ok(self.sensing.m0 + f0(self.ligand(x, t)?, &self.sensing)? / self.sensing.alpha),
        }
    }

    /// Path-wise derivative `D_t M = dM/dt + v dM/dx` along a run at speed `v`.
    pub fn pathwise_derivative(&self, x: f64, v: f64, t: f64) -> Result<f64> {
        match &self.spec {
            SignalSpec::TravelingWave { s0, sa, ell, u } => {
                let phi = (x - u * t).rem_euclid(*ell);
                let arg = 2.0 * std::f64::consts::PI * phi / ell;
                let s = s0 + sa * arg.sin();
                Ok((v - u) * sa * (2.0 * std::f64::consts::PI / ell) * arg.cos()
                    * f0_prime(s, &self.sensing)
                    / self.sensing.alpha)
            }
            SignalSpec::Static { s0, sa, ell } => {
                let phi = x.rem_euclid(*ell);
                let arg = 2.0 * std::f64::consts::PI * phi / ell;
                let s = s0 + sa * arg.sin();
                Ok(v * sa * (2.0 * std::f64::consts::PI / ell) * arg.cos()
                    * f0_prime(s, &self.sensing)
                    / self.sensing.alpha)
            }
            SignalSpec::UniformRamp { rate, .. } => Ok(*rate),
            SignalSpec::Tabulated { xs, domain_length, .. } => {
                // Static table: dM/dt = 0, centered difference for dM/dx.
                let h = 0.5 * domain_length / xs.len() as f64;
                let mp = self.methylation(x + h, t)?;
                let mm = self.methylation(x - h, t)?;
                Ok(v * (mp - mm) / (2.0 * h))
            }
        }
    }

    /// Largest `|D_t M|` over a sampling lattice of the domain and the given
    /// speeds, used to size the blow-up coordinate domain.
    pub fn max_pathwise_derivative(&self, speeds: &[f64], t_end: f64) -> Result<f64> {
        let l = self.domain_length();
        let mut best = 0.0_f64;
        for it in 0..=32 {
            let t = t_end * it as f64 / 32.0;
            if matches!(&self.spec, SignalSpec::UniformRamp { window, .. } if t > *window) {
                continue;
            }
            for ix in 0..256 {
                let x = l * ix as f64 / 256.0;
                for &v in speeds {
                    best = best.max(self.pathwise_derivative(x, v, t)?.abs());
                }
            }
        }
        Ok(best)
    }
}
