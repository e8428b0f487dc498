//! Finite-volume solver for the limiting kinetic equation: the density
//! `pbar(x, v, t)` is advected at speed `v` and exchanged between velocities
//! by the bulk tumbling kernel `T(D_t M)`.
//!
//! The exchange evaluates the loss rate in the pre-tumble direction: mass
//! leaves velocity `v'` at rate `T(D_t M(x, v', t))` and is redistributed
//! uniformly over the velocity set (weights over total weight), matching the
//! agent model's tumble law. For the two-velocity set the exchange is solved
//! exactly in closed form; larger sets use sub-cycled backward Euler on the
//! small exchange system.
//!
//! The step composition mirrors [`crate::solver_full`]: transport half step,
//! exchange full step, transport half step, with the same first-order upwind
//! in `x` so cross-model comparisons share their numerical diffusion.

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, VelocitySet};
use crate::pathway::PathwayParams;
use crate::quadrature::GaussHermite;
use crate::signal::SignalField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    Deterministic,
    Noise,
}

#[derive(Debug, Clone)]
pub struct LimitKineticState {
    /// Density over `[x][v]`, `v` fastest.
    pbar: Vec<f64>,
    pub t: f64,
    pub total_mass_initial: f64,
    pub kernel_mode: KernelMode,
}

impl LimitKineticState {
    #[inline]
    pub fn pbar(&self) -> &[f64] {
        &self.pbar
    }
}

pub struct LimitSolver {
    pub space: SpatialGrid,
    pub vset: VelocitySet,
    pub signal: SignalField,
    pub pathway: PathwayParams,
    pub mode: KernelMode,
    quad: GaussHermite,
    scratch: Vec<f64>,
}

impl LimitSolver {
    pub fn new(
        space: SpatialGrid,
        vset: VelocitySet,
        signal: SignalField,
        pathway: PathwayParams,
        mode: KernelMode,
        quadrature_order: usize,
    ) -> Result<Self> {
        pathway.validate()?;
        if (space.length - signal.domain_length()).abs() > 1e-9 * signal.domain_length() {
            return Err(Error::GridMismatch(format!(
                "grid length {} differs from signal domain length {}",
                space.length,
                signal.domain_length()
            )));
        }
        let n = space.nx * vset.len();
        Ok(Self {
            space,
            vset,
            signal,
            pathway,
            mode,
            quad: GaussHermite::new(quadrature_order)?,
            scratch: vec![0.0; n],
        })
    }

    /// Uniform state with total mass one.
    pub fn initialize_uniform(&self) -> LimitKineticState {
        let val = 1.0 / (self.space.length * self.vset.total_weight());
        let mut state = LimitKineticState {
            pbar: vec![val; self.space.nx * self.vset.len()],
            t: 0.0,
            total_mass_initial: 0.0,
            kernel_mode: self.mode,
        };
        state.total_mass_initial = self.mass(&state);
        state
    }

    /// State from a nonnegative profile `f(x, v_index)`, normalized to mass one.
    pub fn initialize_profile<F: Fn(f64, usize) -> f64>(&self, f: F) -> Result<LimitKineticState> {
        let nv = self.vset.len();
        let mut pbar = vec![0.0; self.space.nx * nv];
        for ix in 0..self.space.nx {
            let x = self.space.x_center(ix);
            for iv in 0..nv {
                let val = f(x, iv);
                if val < 0.0 {
                    return Err(Error::Degenerate(format!("negative initial density at x={x}")));
                }
                pbar[ix * nv + iv] = val;
            }
        }
        let mut state = LimitKineticState {
            pbar,
            t: 0.0,
            total_mass_initial: 0.0,
            kernel_mode: self.mode,
        };
        let m = self.mass(&state);
        if !(m > 0.0) {
            return Err(Error::Degenerate("initial profile has zero mass".into()));
        }
        for v in &mut state.pbar {
            *v /= m;
        }
        state.total_mass_initial = self.mass(&state);
        Ok(state)
    }

    pub fn mass(&self, state: &LimitKineticState) -> f64 {
        let nv = self.vset.len();
        let mut acc = 0.0;
        for ix in 0..self.space.nx {
            for iv in 0..nv {
                acc += self.vset.weight(iv) * state.pbar[ix * nv + iv];
            }
        }
        acc * self.space.dx
    }

    /// Kernel value for a path-wise derivative `u` under the current mode.
    pub fn kernel(&self, u: f64) -> f64 {
        match self.mode {
            KernelMode::Deterministic => self.pathway.kernel_deterministic(u),
            KernelMode::Noise => self.pathway.kernel_noise(u, &self.quad),
        }
    }

    /// Tabulated `T(D_t M(x, v, t))` over the grid, layout `[x][v]`.
    pub fn kernel_field(&self, t: f64) -> Result<Vec<f64>> {
        let nv = self.vset.len();
        let mut field = vec![0.0; self.space.nx * nv];
        for ix in 0..self.space.nx {
            let x = self.space.x_center(ix);
            for iv in 0..nv {
                let u = self.signal.pathwise_derivative(x, self.vset.speed(iv), t)?;
                field[ix * nv + iv] = self.kernel(u);
            }
        }
        Ok(field)
    }

    pub fn step(&mut self, state: &mut LimitKineticState, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Stability { stage: "step", detail: format!("dt must be > 0, got {dt}") });
        }
        let cfl = self.vset.max_speed() * dt / self.space.dx;
        if cfl > 0.9 + 1e-12 {
            return Err(Error::Stability {
                stage: "transport",
                detail: format!("CFL {cfl:.3} exceeds 0.9 (dt={dt}, dx={})", self.space.dx),
            });
        }
        let rates = self.kernel_field(state.t + 0.5 * dt)?;
        self.transport(state, 0.5 * dt);
        self.exchange(state, &rates, dt)?;
        self.transport(state, 0.5 * dt);
        state.t += dt;
        Ok(())
    }

    fn transport(&mut self, state: &mut LimitKineticState, h: f64) {
        let (nx, nv) = (self.space.nx, self.vset.len());
        let dx = self.space.dx;
        let speeds = self.vset.speeds().to_vec();
        let p = &state.pbar;
        self.scratch
            .par_chunks_mut(nv)
            .enumerate()
            .for_each(|(ix, out)| {
                for (iv, &v) in speeds.iter().enumerate() {
                    let c = v * h / dx;
                    let here = p[ix * nv + iv];
                    if v >= 0.0 {
                        let left = p[((ix + nx - 1) % nx) * nv + iv];
                        out[iv] = here - c * (here - left);
                    } else {
                        let right = p[((ix + 1) % nx) * nv + iv];
                        out[iv] = here - c * (right - here);
                    }
                }
            });
        std::mem::swap(&mut state.pbar, &mut self.scratch);
    }

    /// Tumbling exchange with per-direction rates, exact for two velocities.
    fn exchange(&mut self, state: &mut LimitKineticState, rates: &[f64], dt: f64) -> Result<()> {
        let nv = self.vset.len();
        if nv == 2 {
            let w = [self.vset.weight(0), self.vset.weight(1)];
            let wtot = w[0] + w[1];
            state
                .pbar
                .par_chunks_mut(2)
                .enumerate()
                .for_each(|(ix, p)| {
                    let (t0, t1) = (rates[2 * ix], rates[2 * ix + 1]);
                    // d p0/dt = (w0 t0 p0 + w1 t1 p1)/W - t0 p0, likewise p1;
                    // weighted sum conserved, difference relaxes at rate
                    // (w1 t0 + w0 t1)/W.
                    let s = w[0] * p[0] + w[1] * p[1];
                    let sigma = (w[1] * t0 + w[0] * t1) / wtot;
                    let p0_eq = s * t1 / (wtot * sigma);
                    let e = (-sigma * dt).exp();
                    let p0 = p0_eq + (p[0] - p0_eq) * e;
                    p[0] = p0;
                    p[1] = (s - w[0] * p0) / w[1];
                });
            return Ok(());
        }
        // General case: sub-cycled backward Euler on the small exchange
        // system (M-matrix, positivity preserving, conservative).
        let wtot = self.vset.total_weight();
        let weights = self.vset.weights().to_vec();
        let max_rate = rates.iter().fold(0.0_f64, |a, &b| a.max(b));
        let nsub = ((dt * max_rate / 0.2).ceil() as usize).max(1);
        let h = dt / nsub as f64;
        state
            .pbar
            .par_chunks_mut(nv)
            .enumerate()
            .for_each(|(ix, p)| {
                let r = &rates[ix * nv..(ix + 1) * nv];
                let mut a = vec![0.0; nv * nv];
                for i in 0..nv {
                    for j in 0..nv {
                        let k = weights[j] * r[j] / wtot - if i == j { r[j] } else { 0.0 };
                        a[i * nv + j] = if i == j { 1.0 - h * k } else { -h * k };
                    }
                }
                let mut work = a;
                let mut x = vec![0.0; nv];
                for _ in 0..nsub {
                    x.copy_from_slice(p);
                    solve_dense(&mut work, &mut x);
                    p.copy_from_slice(&x);
                    // Rebuild the factored matrix for the next sub-step.
                    for i in 0..nv {
                        for j in 0..nv {
                            let k = weights[j] * r[j] / wtot - if i == j { r[j] } else { 0.0 };
                            work[i * nv + j] = if i == j { 1.0 - h * k } else { -h * k };
                        }
                    }
                }
            });
        Ok(())
    }
}

/// In-place Gaussian elimination with partial pivoting for the tiny exchange
/// systems (`n <= 16`).
fn solve_dense(a: &mut [f64], b: &mut [f64]) {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col * n + c] * b[c];
        }
        b[col] = s / a[col * n + col];
    }
}
