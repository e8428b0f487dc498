//! Moments, distances, concentration metrics, phase-shift measurement, and
//! the epsilon-convergence study that bridges the three model levels.

use crate::agents::AgentPopulation;
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, VelocitySet};
use crate::pathway::PathwayParams;
use crate::signal::SignalField;
use crate::solver_full::{FullKineticState, FullSolver, InitSpec};
use crate::solver_limit::{KernelMode, LimitKineticState, LimitSolver};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceModel {
    Agents,
    Full,
    Limit,
}

/// Density and flux profile on a uniform periodic grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub t: f64,
    pub dx: f64,
    pub length: f64,
    pub rho: Vec<f64>,
    pub flux: Vec<f64>,
    pub mass: f64,
    pub source: SourceModel,
}

impl ProfileRecord {
    pub fn new(
        t: f64,
        dx: f64,
        rho: Vec<f64>,
        flux: Vec<f64>,
        source: SourceModel,
    ) -> Self {
        let mass = rho.iter().sum::<f64>() * dx;
        let length = dx * rho.len() as f64;
        Self { t, dx, length, rho, flux, mass, source }
    }

    /// Build from a per-(x, v) marginal, layout `[x][v]`.
    pub fn from_marginal(
        marginal: &[f64],
        vset: &VelocitySet,
        space: &SpatialGrid,
        t: f64,
        source: SourceModel,
    ) -> Self {
        let nv = vset.len();
        let mut rho = vec![0.0; space.nx];
        let mut flux = vec![0.0; space.nx];
        for ix in 0..space.nx {
            for iv in 0..nv {
                let w = vset.weight(iv);
                rho[ix] += w * marginal[ix * nv + iv];
                flux[ix] += w * vset.speed(iv) * marginal[ix * nv + iv];
            }
        }
        Self::new(t, space.dx, rho, flux, source)
    }

    pub fn from_limit(solver: &LimitSolver, state: &LimitKineticState) -> Self {
        Self::from_marginal(state.pbar(), &solver.vset, &solver.space, state.t, SourceModel::Limit)
    }

    pub fn from_full(solver: &FullSolver, state: &FullKineticState) -> Self {
        Self::from_marginal(
            &solver.marginal(state),
            &solver.grid.vset,
            &solver.grid.space,
            state.t,
            SourceModel::Full,
        )
    }

    pub fn from_agents(pop: &AgentPopulation, nx: usize) -> Self {
        let (rho, flux) = pop.bin(nx);
        Self::new(pop.t, pop.domain_length() / nx as f64, rho, flux, SourceModel::Agents)
    }

    /// Rotate a lab-frame profile into the co-moving frame `phi = x - u t`.
    /// The shift `u t` must land on a whole number of cells.
    pub fn to_comoving(&self, wave_speed: f64) -> Result<Self> {
        let cells = wave_speed * self.t / self.dx;
        let k = cells.round();
        if (cells - k).abs() > 1e-6 {
            return Err(Error::GridMismatch(format!(
                "co-moving shift of {cells:.6} cells is not cell-exact; adjust t_end"
            )));
        }
        let nx = self.rho.len();
        let k = ((k as i64).rem_euclid(nx as i64)) as usize;
        let rot = |v: &[f64]| -> Vec<f64> {
            (0..nx).map(|i| v[(i + k) % nx]).collect()
        };
        Ok(Self {
            rho: rot(&self.rho),
            flux: rot(&self.flux),
            ..self.clone()
        })
    }
}

/// Circular mass center of a nonnegative density on a periodic domain,
/// mapped back to `[0, length)`. Fails when the resultant vector is
/// degenerate (e.g. uniform or antipodal-symmetric profiles).
pub fn mass_center(rho: &[f64], dx: f64, length: f64) -> Result<f64> {
    let mass: f64 = rho.iter().sum::<f64>() * dx;
    if !(mass > 0.0) {
        return Err(Error::Degenerate("mass center of zero-mass profile".into()));
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &r) in rho.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) * dx / length;
        re += r * theta.cos();
        im += r * theta.sin();
    }
    re *= dx;
    im *= dx;
    if (re * re + im * im).sqrt() < 1e-6 * mass {
        return Err(Error::Degenerate("resultant vector vanishes; center undefined".into()));
    }
    let angle = im.atan2(re).rem_euclid(2.0 * std::f64::consts::PI);
    Ok(angle * length / (2.0 * std::f64::consts::PI))
}

/// Signed circular distance `a - b` wrapped into `[-length/2, length/2)`.
pub fn circular_distance(a: f64, b: f64, length: f64) -> f64 {
    (a - b + 0.5 * length).rem_euclid(length) - 0.5 * length
}

/// Signed phase shift between a co-moving density profile and the signal's
/// mass center in the same frame.
pub fn phase_shift_comoving(rho_comoving: &[f64], dx: f64, signal: &SignalField) -> Result<f64> {
    let nx = rho_comoving.len();
    let length = dx * nx as f64;
    let s_profile: Vec<f64> = (0..nx)
        .map(|i| signal.ligand((i as f64 + 0.5) * dx, 0.0))
        .collect::<Result<_>>()?;
    let c_rho = mass_center(rho_comoving, dx, length)?;
    let c_s = mass_center(&s_profile, dx, length)?;
    Ok(circular_distance(c_rho, c_s, length))
}

/// Relative L1 distances of density and flux between two same-grid profiles:
/// `sum |rho_a - rho_b| dx / sum rho_a dx`, and the same normalization for
/// the flux difference.
pub fn l1_distance(a: &ProfileRecord, b: &ProfileRecord) -> Result<(f64, f64)> {
    if a.rho.len() != b.rho.len() || (a.dx - b.dx).abs() > 1e-12 * a.dx {
        return Err(Error::GridMismatch(format!(
            "profiles on different grids: {}x{} vs {}x{}",
            a.rho.len(),
            a.dx,
            b.rho.len(),
            b.dx
        )));
    }
    let norm: f64 = a.rho.iter().sum::<f64>() * a.dx;
    if !(norm > 0.0) {
        return Err(Error::Degenerate("reference profile has zero mass".into()));
    }
    let d_rho: f64 = a
        .rho
        .iter()
        .zip(&b.rho)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * a.dx;
    let d_flux: f64 = a
        .flux
        .iter()
        .zip(&b.flux)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * a.dx;
    Ok((d_rho / norm, d_flux / norm))
}

/// Internal-coordinate concentration metrics of a full-model state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub t: f64,
    pub y_mean: f64,
    pub y_variance: f64,
    pub second_moment: f64,
    pub linf_marginal: f64,
}

impl ConcentrationRecord {
    pub fn from_full(solver: &FullSolver, state: &FullKineticState) -> Self {
        let (second_moment, y_mean, y_variance) = solver.y_moments(state);
        Self {
            t: state.t,
            y_mean,
            y_variance,
            second_moment,
            linf_marginal: solver.linf_marginal(state),
        }
    }
}

/// One epsilon of the convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub epsilon: f64,
    pub l1_rho: f64,
    pub l1_flux: f64,
    pub second_moment_max: f64,
    pub y_variance_final: f64,
    pub mass_drift_rel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyVerdict {
    pub monotone_decreasing: bool,
    pub final_below_half_of_first: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub rows: Vec<StudyRow>,
    pub verdict: StudyVerdict,
}

/// Settings shared by every run of the convergence study.
pub struct StudySetup<'a> {
    pub signal: &'a SignalField,
    pub pathway: &'a PathwayParams,
    pub space: SpatialGrid,
    pub vset: VelocitySet,
    pub ny: usize,
    pub y_halfwidth: f64,
    pub init: InitSpec,
    pub dt: f64,
    pub t_end: f64,
    pub kernel_mode: KernelMode,
    pub quadrature_order: usize,
}

/// Runs the full model at each epsilon against one limit-model reference and
/// reports L1 distances of the co-moving steady profiles, the second-moment
/// trail, and the mass drift. Epsilon runs execute concurrently; rows come
/// back in the epsilon order given.
pub fn convergence_study(setup: &StudySetup, eps_list: &[f64]) -> Result<StudyOutcome> {
    if eps_list.is_empty() {
        return Err(Error::Config("convergence study needs a non-empty eps list".into()));
    }
    if !eps_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Config("eps list must be strictly decreasing".into()));
    }

    let mut limit = LimitSolver::new(
        setup.space.clone(),
        setup.vset.clone(),
        setup.signal.clone(),
        setup.pathway.clone(),
        setup.kernel_mode,
        setup.quadrature_order,
    )?;
    let mut lstate = limit.initialize_uniform();
    let nsteps = (setup.t_end / setup.dt).round() as usize;
    let dt = setup.t_end / nsteps as f64;
    for _ in 0..nsteps {
        limit.step(&mut lstate, dt)?;
    }
    let wave_speed = setup.signal.wave_speed();
    let limit_profile = ProfileRecord::from_limit(&limit, &lstate).to_comoving(wave_speed)?;

    let rows: Result<Vec<StudyRow>> = eps_list
        .par_iter()
        .map(|&eps| -> Result<StudyRow> {
            let pathway = PathwayParams { epsilon: eps, ..setup.pathway.clone() };
            let grid = crate::grid::FullGrid::new(
                setup.space.clone(),
                setup.vset.clone(),
                setup.ny,
                setup.y_halfwidth,
            )?;
            let mut solver = FullSolver::new(grid, setup.signal.clone(), pathway)?;
            solver.validate_coverage(&setup.init, setup.t_end)?;
            let mut state = solver.initialize(&setup.init)?;
            let mut second_moment_max = 0.0_f64;
            for k in 0..nsteps {
                solver.step(&mut state, dt).map_err(|e| {
                    Error::Other(format!("epsilon={eps} run failed at step {k}: {e}"))
                })?;
                if k % 50 == 0 || k + 1 == nsteps {
                    let (m2, _, _) = solver.y_moments(&state);
                    second_moment_max = second_moment_max.max(m2);
                }
            }
            let profile = ProfileRecord::from_full(&solver, &state).to_comoving(wave_speed)?;
            let (l1_rho, l1_flux) = l1_distance(&profile, &limit_profile)?;
            let (_, _, y_var) = solver.y_moments(&state);
            let mass_drift_rel =
                (solver.mass(&state) - state.total_mass_initial).abs() / state.total_mass_initial;
            Ok(StudyRow {
                epsilon: eps,
                l1_rho,
                l1_flux,
                second_moment_max,
                y_variance_final: y_var,
                mass_drift_rel,
            })
        })
        .collect();
    let rows = rows?;

    let l1s: Vec<f64> = rows.iter().map(|r| r.l1_rho).collect();
    let monotone = l1s.windows(2).all(|w| w[1] < w[0]);
    let halved = l1s.last().unwrap() < &(l1s[0] / 2.0);
    Ok(StudyOutcome {
        rows,
        verdict: StudyVerdict {
            monotone_decreasing: monotone,
            final_below_half_of_first: halved,
            pass: monotone && halved,
        },
    })
}
