//! Stochastic cell-based simulator: every cell carries a position, a member
//! of the discrete velocity set, and an intracellular methylation level `m`.
//!
//! Per step and per cell: `m` relaxes toward the local equilibrium `M(x,t)`
//! along the run (frozen-coefficient exponential integrator without noise,
//! one Euler-Maruyama substep with reflection at `m = 0` with noise), then a
//! tumble fires with probability `1 - exp(-Lambda(y) dt)` and redraws the
//! velocity uniformly from the set (weights as probabilities, self-transition
//! allowed), then the cell advances by `v dt` on the periodic domain.
//!
//! Each cell owns a counter-based RNG stream derived from the population seed
//! and the cell index, so trajectories are bit-identical for any worker
//! count or scheduling.

use crate::error::{Error, Result};
use crate::grid::VelocitySet;
use crate::pathway::PathwayParams;
use crate::signal::SignalField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct Agent {
    /// Position (um), wrapped into `[0, L)`.
    pub x: f64,
    /// Index into the velocity set.
    pub v_idx: u32,
    /// Methylation level, `m >= 0`.
    pub m: f64,
}

pub struct AgentPopulation {
    agents: Vec<Agent>,
    rngs: Vec<ChaCha8Rng>,
    pub t: f64,
    pub seed: u64,
    pub vset: VelocitySet,
    pub pathway: PathwayParams,
    domain_length: f64,
}

impl AgentPopulation {
    /// Draws `n` cells: positions uniform on the domain, velocities from the
    /// weight distribution, and methylation `m = M(x, 0) + eps y` with
    /// `y ~ N(0, 1/G(0))` (the stationary internal spread, matching the
    /// default grid initialization of the kinetic solver).
    pub fn init(
        n: usize,
        seed: u64,
        vset: VelocitySet,
        signal: &SignalField,
        pathway: PathwayParams,
    ) -> Result<Self> {
        pathway.validate()?;
        if n == 0 {
            return Err(Error::Degenerate("population needs at least one cell".into()));
        }
        let domain_length = signal.domain_length();
        let y_std = 1.0 / pathway.g0().sqrt();
        let eps = pathway.epsilon;
        let cumw = cumulative_weights(&vset);
        let mut agents = Vec::with_capacity(n);
        let mut rngs = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = rng.gen_range(0.0..domain_length);
            let v_idx = draw_velocity(&cumw, &mut rng);
            let y: f64 = {
                let z: f64 = rng.sample(StandardNormal);
                z * y_std
            };
            let m = (signal.methylation(x, 0.0)? + eps * y).abs();
            agents.push(Agent { x, v_idx, m });
            rngs.push(rng);
        }
        Ok(Self { agents, rngs, t: 0.0, seed, vset, pathway, domain_length })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    /// Largest step satisfying the thinning bound `lambda_plus * dt <= 0.2`.
    pub fn dt_max(&self) -> f64 {
        0.2 / self.pathway.lambda_plus()
    }

    /// Advance every cell by `dt`.
    pub fn step(&mut self, signal: &SignalField, dt: f64) -> Result<()> {
        if self.pathway.lambda_plus() * dt > 0.2 + 1e-12 {
            return Err(Error::Stability {
                stage: "tumbling",
                detail: format!(
                    "thinning bound violated: lambda_plus * dt = {:.3} > 0.2",
                    self.pathway.lambda_plus() * dt
                ),
            });
        }
        let p = &self.pathway;
        let eps = p.epsilon;
        let noise = p.noise_enabled;
        let t0 = self.t;
        let length = self.domain_length;
        let cumw = cumulative_weights(&self.vset);
        let speeds = self.vset.speeds().to_vec();
        let rate = p.tumble_rate();
        // Frozen-coefficient substeps: enough that G barely changes within one.
        let n_sub = if noise {
            1
        } else {
            ((dt * p.g0() / (0.2 * eps)).ceil() as usize).max(1)
        };
        let sigma_w = (2.0 * eps * dt / n_sub as f64).sqrt();

        let result: Result<()> = self
            .agents
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .map(|(agent, rng)| {
                let v = speeds[agent.v_idx as usize];
                let h = dt / n_sub as f64;
                let mut m_eq = 0.0;
                for k in 0..n_sub {
                    let s = (k + 1) as f64 * h;
                    m_eq = signal.methylation(agent.x + v * s, t0 + s)?;
                    if noise {
                        let r = agent.m - m_eq;
                        let z: f64 = rng.sample(StandardNormal);
                        agent.m += p.adaptation_f(r) / eps * h + sigma_w * z;
                        if agent.m < 0.0 {
                            agent.m = -agent.m;
                        }
                    } else {
                        // m relaxes toward M at the frozen local rate G(eps y)/eps.
                        let r = agent.m - m_eq;
                        let g = p.g_of(r); // r = eps * y
                        agent.m = m_eq + r * (-g * h / eps).exp();
                    }
                }
                let y = (agent.m - m_eq) / eps;
                let tumble_prob = -(-rate.at(y) * dt).exp_m1();
                if rng.gen::<f64>() < tumble_prob {
                    agent.v_idx = draw_velocity(&cumw, rng);
                }
                agent.x = (agent.x + v * dt).rem_euclid(length);
                Ok(())
            })
            .reduce(|| Ok(()), |a, b| a.and(b));
        result?;
        self.t += dt;
        Ok(())
    }

    /// Histogram density and flux on `nx` cells, normalized so
    /// `sum rho dx = 1`.
    pub fn bin(&self, nx: usize) -> (Vec<f64>, Vec<f64>) {
        self.bin_at(nx, |a| a.x)
    }

    /// Same histogram in the co-moving frame `phi = x - u t (mod L)`.
    pub fn bin_comoving(&self, nx: usize, wave_speed: f64) -> (Vec<f64>, Vec<f64>) {
        let shift = wave_speed * self.t;
        let l = self.domain_length;
        self.bin_at(nx, move |a| (a.x - shift).rem_euclid(l))
    }

    fn bin_at<F: Fn(&Agent) -> f64>(&self, nx: usize, coord: F) -> (Vec<f64>, Vec<f64>) {
        let dx = self.domain_length / nx as f64;
        let mut rho = vec![0.0; nx];
        let mut flux = vec![0.0; nx];
        let norm = 1.0 / (self.agents.len() as f64 * dx);
        for a in &self.agents {
            let i = ((coord(a) / dx) as usize).min(nx - 1);
            rho[i] += norm;
            flux[i] += norm * self.vset.speed(a.v_idx as usize);
        }
        (rho, flux)
    }

    /// Sample of the blow-up offsets `y = (m - M(x,t))/eps`.
    pub fn y_samples(&self, signal: &SignalField) -> Result<Vec<f64>> {
        let eps = self.pathway.epsilon;
        self.agents
            .iter()
            .map(|a| Ok((a.m - signal.methylation(a.x, self.t)?) / eps))
            .collect()
    }
}

fn cumulative_weights(vset: &VelocitySet) -> Vec<f64> {
    let total = vset.total_weight();
    let mut acc = 0.0;
    vset.weights()
        .iter()
        .map(|&w| {
            acc += w / total;
            acc
        })
        .collect()
}

#[inline]
fn draw_velocity(cumw: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.gen();
    for (i, &c) in cumw.iter().enumerate() {
        if u < c {
            return i as u32;
        }
    }
    (cumw.len() - 1) as u32
}
