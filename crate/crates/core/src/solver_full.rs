//! Finite-volume solver for the kinetic model with internal state in the
//! blow-up coordinate `y = (m - M)/epsilon`.
//!
//! The unknown is the nonnegative density `q(x, v, y, t)` on a periodic
//! `x`-domain, a discrete velocity set, and a truncated symmetric `y` domain.
//! One step advances by Strang composition
//!
//! ```text
//! transport(dt/2) -> y-stage(dt/2) -> tumble(dt) -> y-stage(dt/2) -> transport(dt/2)
//! ```
//!
//! * transport: first-order upwind advection at speed `v`, periodic in `x`;
//! * y-stage: conservative upwind drift with face velocity
//!   `-(D_t M + y G(eps y))/eps`, sub-cycled to a CFL number of 1/2, plus
//!   (when noise is enabled) implicit backward-Euler diffusion `(1/eps) d_yy`
//!   with no-flux boundaries;
//! * tumble: exact relaxation of each `(x, y)` cell toward the weighted
//!   velocity mean at rate `Lambda(y)` (tumbles redistribute uniformly over
//!   the velocity set, self-transitions allowed).
//!
//! Every stage is in flux form or an exact exchange, so total mass is
//! conserved to rounding; all stages preserve positivity. The advective
//! boundary fluxes in `y` vanish because the drift points inward once the
//! domain covers the concentration profile; a run aborts if more than 1e-6
//! of the mass reaches the three cells next to either `y` boundary.

use crate::error::{Error, Result};
use crate::grid::FullGrid;
use crate::pathway::PathwayParams;
use crate::signal::SignalField;
use rayon::prelude::*;

/// Initial profile in `y` (spatially and velocity uniform).
#[derive(Debug, Clone)]
pub enum InitSpec {
    /// Centered Gaussian; `None` uses the stationary noise variance `1/G(0)`.
    GaussianY { variance: Option<f64> },
    /// All mass in the cell containing `y0`.
    DiracY { y0: f64 },
    /// Explicit per-cell values, length `ny`, nonnegative.
    TabulatedY(Vec<f64>),
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::GaussianY { variance: None }
    }
}

#[derive(Debug, Clone)]
pub struct FullKineticState {
    /// Density over `[x][v][y]`, row-major with `y` fastest.
    q: Vec<f64>,
    pub t: f64,
    pub epsilon: f64,
    pub total_mass_initial: f64,
}

impl FullKineticState {
    #[inline]
    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

pub struct FullSolver {
    pub grid: FullGrid,
    pub signal: SignalField,
    pub pathway: PathwayParams,
    /// `y G(eps y)` at the ny+1 faces.
    yg_face: Vec<f64>,
    /// `Lambda(y_j)` at cell centers.
    lambda_cells: Vec<f64>,
    /// `exp(-Lambda(y_j) dt)` cached for the current step size.
    tumble_decay: Vec<f64>,
    tumble_dt: f64,
    scratch: Vec<f64>,
}

impl FullSolver {
    pub fn new(grid: FullGrid, signal: SignalField, pathway: PathwayParams) -> Result<Self> {
        pathway.validate()?;
        if (grid.space.length - signal.domain_length()).abs() > 1e-9 * signal.domain_length() {
            return Err(Error::GridMismatch(format!(
                "grid length {} differs from signal domain length {}",
                grid.space.length,
                signal.domain_length()
            )));
        }
        let eps = pathway.epsilon;
        let yg_face = (0..=grid.ny)
            .map(|j| {
                let y = grid.y_face(j);
                y * pathway.g_of(eps * y)
            })
            .collect();
        let lambda_cells: Vec<f64> = (0..grid.ny).map(|j| pathway.lambda_y(grid.y_center(j))).collect();
        let n = grid.n_cells();
        Ok(Self {
            grid,
            signal,
            pathway,
            yg_face,
            lambda_cells,
            tumble_decay: Vec::new(),
            tumble_dt: f64::NAN,
            scratch: vec![0.0; n],
        })
    }

    /// Checks that the truncated `y` domain covers the concentration profile
    /// for this run (limit location plus three standard deviations of the
    /// wider of the noise profile and the initial profile).
    pub fn validate_coverage(&self, init: &InitSpec, t_end: f64) -> Result<()> {
        let u_max = self
            .signal
            .max_pathwise_derivative(self.grid.vset.speeds(), t_end)?;
        let g0 = self.pathway.g0();
        let mut std = if self.pathway.noise_enabled { 1.0 / g0.sqrt() } else { 0.0 };
        match init {
            InitSpec::GaussianY { variance } => {
                std = std.max(variance.unwrap_or(1.0 / g0).sqrt());
            }
            InitSpec::DiracY { y0 } => {
                std = std.max(y0.abs() / 3.0);
            }
            InitSpec::TabulatedY(_) => {}
        }
        let needed = u_max / g0 + 3.0 * std;
        if self.grid.y_max <= needed {
            return Err(Error::Config(format!(
                "y_halfwidth {} must exceed |u_max|/G0 + 3 std = {needed:.4}",
                self.grid.y_max
            )));
        }
        Ok(())
    }

    pub fn initialize(&self, init: &InitSpec) -> Result<FullKineticState> {
        let g = &self.grid;
        let profile: Vec<f64> = match init {
            InitSpec::GaussianY { variance } => {
                let var = variance.unwrap_or(1.0 / self.pathway.g0());
                if !(var > 0.0) {
                    return Err(Error::Degenerate(format!("init variance must be > 0, got {var}")));
                }
                (0..g.ny)
                    .map(|j| (-g.y_center(j).powi(2) / (2.0 * var)).exp())
                    .collect()
            }
            InitSpec::DiracY { y0 } => {
                if *y0 < g.y_min || *y0 > g.y_max {
                    return Err(Error::Degenerate(format!("Dirac location {y0} outside y domain")));
                }
                let j = (((y0 - g.y_min) / g.dy) as usize).min(g.ny - 1);
                let mut p = vec![0.0; g.ny];
                p[j] = 1.0;
                p
            }
            InitSpec::TabulatedY(values) => {
                if values.len() != g.ny {
                    return Err(Error::Degenerate(format!(
                        "tabulated init needs {} values, got {}",
                        g.ny,
                        values.len()
                    )));
                }
                if values.iter().any(|&v| v < 0.0) {
                    return Err(Error::Degenerate("tabulated init has a negative entry".into()));
                }
                values.clone()
            }
        };
        let psum: f64 = profile.iter().sum();
        if !(psum > 0.0) {
            return Err(Error::Degenerate("initial profile has zero mass".into()));
        }
        // Normalize so the total mass (with cell volumes and velocity
        // weights) is one.
        let total = psum * g.dy * g.space.length * g.vset.total_weight();
        let mut q = Vec::with_capacity(g.n_cells());
        for _ix in 0..g.space.nx {
            for _iv in 0..g.vset.len() {
                for &p in &profile {
                    q.push(p / total);
                }
            }
        }
        let mut state = FullKineticState {
            q,
            t: 0.0,
            epsilon: self.pathway.epsilon,
            total_mass_initial: 0.0,
        };
        state.total_mass_initial = self.mass(&state);
        Ok(state)
    }

    /// Total mass `sum q dx dy w_v` (fixed summation order).
    pub fn mass(&self, state: &FullKineticState) -> f64 {
        let g = &self.grid;
        let ny = g.ny;
        let mut acc = 0.0;
        for ix in 0..g.space.nx {
            for iv in 0..g.vset.len() {
                let base = (ix * g.vset.len() + iv) * ny;
                let col: f64 = state.q[base..base + ny].iter().sum();
                acc += g.vset.weight(iv) * col;
            }
        }
        acc * g.space.dx * g.dy
    }

    /// Marginal `qbar(x, v) = int q dy`, layout `[x][v]`.
    pub fn marginal(&self, state: &FullKineticState) -> Vec<f64> {
        let g = &self.grid;
        let ny = g.ny;
        (0..g.space.nx * g.vset.len())
            .map(|c| state.q[c * ny..(c + 1) * ny].iter().sum::<f64>() * g.dy)
            .collect()
    }

    /// Second moment `int y^2 q dx dy dw` and the global mean/variance of `y`.
    pub fn y_moments(&self, state: &FullKineticState) -> (f64, f64, f64) {
        let g = &self.grid;
        let ny = g.ny;
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for ix in 0..g.space.nx {
            for iv in 0..g.vset.len() {
                let w = g.vset.weight(iv);
                let base = (ix * g.vset.len() + iv) * ny;
                for j in 0..ny {
                    let y = g.y_center(j);
                    let qw = w * state.q[base + j];
                    m0 += qw;
                    m1 += qw * y;
                    m2 += qw * y * y;
                }
            }
        }
        let vol = g.space.dx * g.dy;
        let mean = m1 / m0;
        let var = m2 / m0 - mean * mean;
        (m2 * vol, mean, var)
    }

    /// Largest marginal value over `(x, v)`.
    pub fn linf_marginal(&self, state: &FullKineticState) -> f64 {
        self.marginal(state).iter().fold(0.0_f64, |a, &b| a.max(b))
    }

    /// Density in the original methylation variable,
    /// `p(m) = q(x, v, (m - M(x,t))/eps)/eps`, linearly interpolated in `y`
    /// and zero outside the truncated domain.
    pub fn reconstruct_p(&self, state: &FullKineticState, ix: usize, iv: usize, m: f64) -> Result<f64> {
        let g = &self.grid;
        let m_eq = self.signal.methylation(g.space.x_center(ix), state.t)?;
        let y = (m - m_eq) / state.epsilon;
        let pos = (y - g.y_min) / g.dy - 0.5;
        if pos <= -1.0 || pos >= g.ny as f64 {
            return Ok(0.0);
        }
        let base = (ix * g.vset.len() + iv) * g.ny;
        let j0 = pos.floor();
        let w = pos - j0;
        let j0 = j0 as isize;
        let qa = if j0 < 0 { 0.0 } else { state.q[base + j0 as usize] };
        let jb = j0 + 1;
        let qb = if jb >= g.ny as isize { 0.0 } else { state.q[base + jb as usize] };
        Ok((qa * (1.0 - w) + qb * w) / state.epsilon)
    }

    /// Mass within three cells of either `y` boundary, relative to total.
    pub fn boundary_mass_fraction(&self, state: &FullKineticState) -> f64 {
        let g = &self.grid;
        let ny = g.ny;
        let k = 3.min(ny / 2);
        let mut acc = 0.0;
        for c in 0..g.space.nx * g.vset.len() {
            let iv = c % g.vset.len();
            let base = c * ny;
            let w = g.vset.weight(iv);
            for j in 0..k {
                acc += w * (state.q[base + j] + state.q[base + ny - 1 - j]);
            }
        }
        acc * g.space.dx * g.dy / self.mass(state)
    }

    /// Advance one Strang-split step of size `dt`.
    pub fn step(&mut self, state: &mut FullKineticState, dt: f64) -> Result<()> {
        let g = &self.grid;
        if !(dt > 0.0) {
            return Err(Error::Stability { stage: "step", detail: format!("dt must be > 0, got {dt}") });
        }
        let cfl = g.vset.max_speed() * dt / g.space.dx;
        if cfl > 0.9 + 1e-12 {
            return Err(Error::Stability {
                stage: "transport",
                detail: format!("CFL {cfl:.3} exceeds 0.9 (dt={dt}, dx={})", g.space.dx),
            });
        }
        if self.tumble_dt != dt {
            self.tumble_decay = self.lambda_cells.iter().map(|&l| (-l * dt).exp()).collect();
            self.tumble_dt = dt;
        }

        // Path-wise derivative per (x, v) at the step midpoint.
        let t_mid = state.t + 0.5 * dt;
        let nv = g.vset.len();
        let mut dtm = vec![0.0; g.space.nx * nv];
        for ix in 0..g.space.nx {
            let x = g.space.x_center(ix);
            for iv in 0..nv {
                dtm[ix * nv + iv] = self.signal.pathwise_derivative(x, g.vset.speed(iv), t_mid)?;
            }
        }

        self.transport(state, 0.5 * dt);
        self.y_stage(state, &dtm, 0.5 * dt)?;
        self.tumble(state, dt);
        self.y_stage(state, &dtm, 0.5 * dt)?;
        self.transport(state, 0.5 * dt);

        state.t += dt;
        let frac = self.boundary_mass_fraction(state);
        if frac > 1e-6 {
            return Err(Error::Truncation(format!(
                "{:.3e} of the mass sits within 3 cells of the y boundary at t={:.3}; \
                 enlarge y_halfwidth",
                frac, state.t
            )));
        }
        Ok(())
    }

    /// First-order upwind advection in `x`, periodic, via double buffer.
    fn transport(&mut self, state: &mut FullKineticState, h: f64) {
        let g = &self.grid;
        let (nx, nv, ny) = (g.space.nx, g.vset.len(), g.ny);
        let dx = g.space.dx;
        let speeds = g.vset.speeds().to_vec();
        let q = &state.q;
        let slab = nv * ny;
        self.scratch
            .par_chunks_mut(slab)
            .enumerate()
            .for_each(|(ix, out)| {
                for (iv, &v) in speeds.iter().enumerate() {
                    let c = v * h / dx;
                    // Upwind neighbor in x for this velocity sign.
                    let ixn = if v >= 0.0 {
                        (ix + nx - 1) % nx
                    } else {
                        (ix + 1) % nx
                    };
                    let here = &q[(ix * nv + iv) * ny..(ix * nv + iv) * ny + ny];
                    let nbr = &q[(ixn * nv + iv) * ny..(ixn * nv + iv) * ny + ny];
                    let dst = &mut out[iv * ny..(iv + 1) * ny];
                    if v >= 0.0 {
                        for j in 0..ny {
                            dst[j] = here[j] - c * (here[j] - nbr[j]);
                        }
                    } else {
                        for j in 0..ny {
                            dst[j] = here[j] - c * (nbr[j] - here[j]);
                        }
                    }
                }
            });
        std::mem::swap(&mut state.q, &mut self.scratch);
    }

    /// Stiff drift toward `y = -D_t M/G`, sub-cycled explicit upwind in flux
    /// form; with noise the diffusive flux `-(1/eps) dq/dy` joins the same
    /// sub-cycled loop (splitting drift and diffusion at the full stage size
    /// would distort the stationary internal profile, since both act on the
    /// fast `eps/G(0)` time scale).
    fn y_stage(&mut self, state: &mut FullKineticState, dtm: &[f64], h: f64) -> Result<()> {
        let g = &self.grid;
        let ny = g.ny;
        let dy = g.dy;
        let eps = self.pathway.epsilon;
        let yg = &self.yg_face;
        let noise = self.pathway.noise_enabled;
        // Diffusive flux coefficient at faces: (1/eps) (q_j - q_{j-1}) / dy.
        let dcoef = if noise { 1.0 / (eps * dy) } else { 0.0 };

        let result: Result<()> = state
            .q
            .par_chunks_mut(ny)
            .enumerate()
            .map(|(col, q)| {
                let dtm_c = dtm[col];
                // Face velocities; boundary faces carry no flux (the drift
                // points inward whenever the coverage invariant holds, and
                // the diffusion satisfies no-flux walls).
                let mut amax = 0.0_f64;
                let mut a = vec![0.0; ny + 1];
                for j in 1..ny {
                    let af = -(dtm_c + yg[j]) / eps;
                    a[j] = af;
                    amax = amax.max(af.abs());
                }
                // Positivity bound for the combined explicit update.
                let rate = amax / dy + 2.0 * dcoef / dy;
                let nsub = ((h * rate / 0.5).ceil() as usize).max(1);
                if nsub > 5_000_000 {
                    return Err(Error::Stability {
                        stage: "y-stage",
                        detail: format!("{nsub} sub-steps requested; refine dt or the y grid"),
                    });
                }
                let hs = h / nsub as f64;
                for _ in 0..nsub {
                    let mut f_prev = 0.0;
                    for j in 0..ny {
                        let qj = q[j];
                        let f_right = if j + 1 == ny {
                            0.0
                        } else {
                            let af = a[j + 1];
                            let adv = if af > 0.0 { af * qj } else { af * q[j + 1] };
                            adv - dcoef * (q[j + 1] - qj)
                        };
                        let val = qj - (hs / dy) * (f_right - f_prev);
                        // Draining cells decay exponentially; flush before
                        // they reach subnormal range and stall the FPU.
                        q[j] = if val.abs() < 1e-290 { 0.0 } else { val };
                        f_prev = f_right;
                    }
                }
                Ok(())
            })
            .reduce(|| Ok(()), |a, b| a.and(b));
        result
    }

    /// Exact tumbling relaxation toward the weighted velocity mean at rate
    /// `Lambda(y)`.
    fn tumble(&mut self, state: &mut FullKineticState, _dt: f64) {
        let g = &self.grid;
        let (nv, ny) = (g.vset.len(), g.ny);
        let weights = g.vset.weights().to_vec();
        let wtot = g.vset.total_weight();
        let decay = &self.tumble_decay;
        state
            .q
            .par_chunks_mut(nv * ny)
            .for_each(|slab| {
                for j in 0..ny {
                    let mut mean = 0.0;
                    for iv in 0..nv {
                        mean += weights[iv] * slab[iv * ny + j];
                    }
                    mean /= wtot;
                    let e = decay[j];
                    for iv in 0..nv {
                        let qv = &mut slab[iv * ny + j];
                        *qv = mean + (*qv - mean) * e;
                    }
                }
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpatialGrid, VelocitySet};
    use crate::signal::{LogSensingParams, SignalSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn uniform_signal() -> SignalField {
        SignalField::new(
            SignalSpec::Static { s0: 500.0, sa: 0.0, ell: 800.0 },
            LogSensingParams::default(),
        )
        .unwrap()
    }

    fn small_grid(ny: usize, halfwidth: f64) -> FullGrid {
        FullGrid::new(
            SpatialGrid::new(800.0, 8).unwrap(),
            VelocitySet::two_velocity(20.0).unwrap(),
            ny,
            halfwidth,
        )
        .unwrap()
    }

    fn solver(ny: usize, halfwidth: f64, eps: f64, noise: bool) -> FullSolver {
        let pathway = PathwayParams { epsilon: eps, noise_enabled: noise, ..Default::default() };
        FullSolver::new(small_grid(ny, halfwidth), uniform_signal(), pathway).unwrap()
    }

    #[test]
    fn initialize_normalizes_mass_to_one() {
        let s = solver(64, 5.0, 0.2, false);
        let state = s.initialize(&InitSpec::default()).unwrap();
        assert_relative_eq!(state.total_mass_initial, 1.0, max_relative = 1e-12);
        assert!(state.q.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn dirac_init_has_negligible_second_moment() {
        let s = solver(64, 5.0, 0.2, false);
        let state = s.initialize(&InitSpec::DiracY { y0: 0.0 }).unwrap();
        let (m2, _, var) = s.y_moments(&state);
        // All mass in the cell containing y = 0 (center dy/2 away at most).
        assert!(m2 <= s.grid.dy * s.grid.dy);
        assert!(var <= s.grid.dy * s.grid.dy);
    }

    #[test]
    fn degenerate_inits_are_rejected() {
        let s = solver(64, 5.0, 0.2, false);
        assert!(s.initialize(&InitSpec::TabulatedY(vec![0.0; 64])).is_err());
        let mut bad = vec![0.0; 64];
        bad[5] = -1.0;
        assert!(s.initialize(&InitSpec::TabulatedY(bad)).is_err());
        assert!(s.initialize(&InitSpec::TabulatedY(vec![1.0; 8])).is_err());
    }

    #[test]
    fn uniform_state_stays_uniform_under_uniform_signal() {
        let mut s = solver(32, 5.0, 0.2, false);
        let mut state = s.initialize(&InitSpec::default()).unwrap();
        for _ in 0..50 {
            s.step(&mut state, 0.1).unwrap();
        }
        let qbar = s.marginal(&state);
        let mean = qbar.iter().sum::<f64>() / qbar.len() as f64;
        for &v in &qbar {
            assert_abs_diff_eq!(v, mean, epsilon = 1e-13);
        }
    }

    #[test]
    fn mass_conserved_and_positive_over_many_steps() {
        let wave = SignalField::new(
            SignalSpec::TravelingWave { s0: 500.0, sa: 100.0, ell: 800.0, u: 0.4 },
            LogSensingParams::default(),
        )
        .unwrap();
        let pathway = PathwayParams { epsilon: 0.2, ..Default::default() };
        let grid = FullGrid::new(
            SpatialGrid::new(800.0, 16).unwrap(),
            VelocitySet::two_velocity(20.0).unwrap(),
            48,
            3.0,
        )
        .unwrap();
        let mut s = FullSolver::new(grid, wave, pathway).unwrap();
        let mut state = s.initialize(&InitSpec::default()).unwrap();
        let m0 = s.mass(&state);
        for _ in 0..1000 {
            s.step(&mut state, 0.18).unwrap();
        }
        let drift = (s.mass(&state) - m0).abs() / m0;
        assert!(drift < 1e-10, "mass drift {drift}");
        assert!(state.q.iter().all(|&v| v >= 0.0), "negative density");
    }

    #[test]
    fn variance_decays_toward_grid_floor_matching_ode_oracle() {
        // Static signal, no noise: the y profile contracts toward y = 0.
        // Oracle: exact characteristics dy/dt = -y G(eps y)/eps integrated
        // with tiny RK4 steps for a sample of initial points.
        let eps = 0.25;
        let mut s = solver(128, 5.0, eps, false);
        let var0 = 1.0 / s.pathway.g0();
        let mut state = s.initialize(&InitSpec::GaussianY { variance: Some(var0) }).unwrap();

        let p = s.pathway.clone();
        let oracle_var = |t: f64| -> f64 {
            // Gauss-Hermite sample of the initial Gaussian, each point moved
            // by the characteristic ODE.
            let quad = crate::quadrature::GaussHermite::new(32).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            let sqrt2v = (2.0 * var0).sqrt();
            for i in 0..32 {
                let (w, x) = (quad_weight(&quad, i), quad_node(&quad, i));
                let mut y = sqrt2v * x;
                let mut s_t = 0.0;
                let h = 1e-4_f64.min(t.max(1e-12));
                while s_t < t - 1e-12 {
                    let hh = h.min(t - s_t);
                    let f = |y: f64| -y * p.g_of(eps * y) / eps;
                    let k1 = f(y);
                    let k2 = f(y + 0.5 * hh * k1);
                    let k3 = f(y + 0.5 * hh * k2);
                    let k4 = f(y + hh * k3);
                    y += hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    s_t += hh;
                }
                num += w * y * y;
                den += w;
            }
            num / den
        };

        let dt = 0.02;
        let mut prev = f64::INFINITY;
        for k in 1..=10 {
            s.step(&mut state, dt).unwrap();
            let (_, _, var) = s.y_moments(&state);
            assert!(var < prev + 1e-12, "variance not decaying at step {k}");
            prev = var;
            let expect = oracle_var(k as f64 * dt);
            let floor = 4.0 * s.grid.dy * s.grid.dy;
            if expect > 10.0 * floor {
                assert_relative_eq!(var, expect, max_relative = 0.25);
            }
        }
    }

    fn quad_node(q: &crate::quadrature::GaussHermite, i: usize) -> f64 {
        // Test-only access via integrate of an indicator-free trick: rebuild
        // nodes by integrating monomial selectors is overkill; expose through
        // the public API instead.
        q.nodes_weights().0[i]
    }
    fn quad_weight(q: &crate::quadrature::GaussHermite, i: usize) -> f64 {
        q.nodes_weights().1[i]
    }

    #[test]
    fn ramp_concentrates_at_predicted_location() {
        // M = m0 + c t: the y profile should pile up within one cell of
        // y* = -c/G(0).
        let ramp = SignalField::new(
            SignalSpec::UniformRamp { s0: 500.0, rate: 0.5, window: 50.0, domain_length: 800.0 },
            LogSensingParams::default(),
        )
        .unwrap();
        let pathway = PathwayParams { epsilon: 0.1, ..Default::default() };
        let grid = small_grid(64, 2.0);
        let mut s = FullSolver::new(grid, ramp, pathway).unwrap();
        let mut state = s
            .initialize(&InitSpec::GaussianY { variance: Some(0.04) })
            .unwrap();
        for _ in 0..40 {
            s.step(&mut state, 0.05).unwrap();
        }
        let (_, mean, var) = s.y_moments(&state);
        let target = -0.5 / s.pathway.g0();
        assert!((mean - target).abs() < s.grid.dy, "mean {mean} vs {target}");
        assert!(var < 4.0 * s.grid.dy * s.grid.dy, "variance {var}");
    }

    #[test]
    fn marginal_of_dirac_init_matches_profile_and_conserves() {
        let s = solver(64, 5.0, 0.2, false);
        let state = s.initialize(&InitSpec::DiracY { y0: 0.5 }).unwrap();
        let qbar = s.marginal(&state);
        let total: f64 = qbar
            .iter()
            .enumerate()
            .map(|(c, &v)| s.grid.vset.weight(c % s.grid.vset.len()) * v)
            .sum::<f64>()
            * s.grid.space.dx;
        assert_relative_eq!(total, state.total_mass_initial, max_relative = 1e-12);
        let mean = qbar.iter().sum::<f64>() / qbar.len() as f64;
        for &v in &qbar {
            assert_abs_diff_eq!(v, mean, epsilon = 1e-15);
        }
    }

    #[test]
    fn reconstruct_p_integrates_to_marginal() {
        let s = solver(64, 5.0, 0.2, false);
        let state = s.initialize(&InitSpec::default()).unwrap();
        let m_eq = s.signal.methylation(s.grid.space.x_center(3), 0.0).unwrap();
        let eps = state.epsilon;
        // Quadrature over m with dm = eps dy.
        let n = 4000;
        let m_lo = m_eq + eps * s.grid.y_min;
        let dm = eps * (s.grid.y_max - s.grid.y_min) / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let m = m_lo + k as f64 * dm;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * s.reconstruct_p(&state, 3, 0, m).unwrap();
        }
        acc *= dm;
        let qbar = s.marginal(&state)[3 * 2];
        assert_relative_eq!(acc, qbar, max_relative = 1e-3);
        // Far outside the y domain the reconstruction vanishes.
        assert_eq!(s.reconstruct_p(&state, 3, 0, m_eq + 2.0 * eps * s.grid.y_max).unwrap(), 0.0);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let mut s = solver(32, 5.0, 0.2, false);
        let mut state = s.initialize(&InitSpec::default()).unwrap();
        let err = s.step(&mut state, 10.0).unwrap_err();
        assert!(matches!(err, Error::Stability { stage: "transport", .. }));
    }

    #[test]
    fn noise_diffusion_conserves_mass_and_reaches_stationary_variance() {
        let eps = 0.1;
        let mut s = solver(256, 3.0, eps, true);
        let mut state = s.initialize(&InitSpec::GaussianY { variance: Some(0.01) }).unwrap();
        let m0 = s.mass(&state);
        for _ in 0..25 {
            s.step(&mut state, 0.02).unwrap();
        }
        assert_relative_eq!(s.mass(&state), m0, max_relative = 1e-10);
        let (_, mean, var) = s.y_moments(&state);

        // Oracle: the exact stationary solution of drift plus diffusion is
        // q ~ exp(-Phi(y)) with Phi(y) = int_0^y s G(eps s) ds; its variance
        // exceeds 1/G(0) at finite eps because G decays away from zero.
        let p = s.pathway.clone();
        let phi = |y: f64| -> f64 {
            let n = 2000;
            let h = y / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let sa = (i as f64 + 0.5) * h;
                acc += sa * p.g_of(eps * sa);
            }
            acc * h
        };
        let n = 1200;
        let (mut znorm, mut zvar) = (0.0, 0.0);
        for i in 0..=n {
            let y = -3.0 + 6.0 * i as f64 / n as f64;
            let w = (-phi(y)).exp() * if i == 0 || i == n { 0.5 } else { 1.0 };
            znorm += w;
            zvar += w * y * y;
        }
        let var_oracle = zvar / znorm;
        assert!(var_oracle > 1.0 / p.g0());
        assert_abs_diff_eq!(mean, 0.0, epsilon = 0.02);
        // Remaining gap is first-order upwind diffusion, proportional to dy.
        assert_relative_eq!(var, var_oracle, max_relative = 0.06);
        assert!(state.q.iter().all(|&v| v >= 0.0));
    }
}
