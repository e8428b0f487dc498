//! Run configuration: TOML sections with defaults, validation, and
//! construction of the domain objects used by the runners.

use crate::error::{Error, Result};
use crate::grid::{FullGrid, SpatialGrid, VelocitySet};
use crate::pathway::PathwayParams;
use crate::signal::{LogSensingParams, SignalField, SignalSpec};
use crate::solver_limit::KernelMode;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    /// traveling-wave | static | uniform-ramp | tabulated
    pub kind: String,
    #[serde(rename = "S0_uM")]
    pub s0_um: f64,
    #[serde(rename = "SA_uM")]
    pub sa_um: f64,
    pub ell_um: f64,
    pub u_um_per_s: f64,
    pub ramp_rate_per_s: f64,
    pub ramp_window_s: f64,
    pub m0: f64,
    #[serde(rename = "K_I_uM")]
    pub k_i_um: f64,
    #[serde(rename = "K_A_uM")]
    pub k_a_um: f64,
    pub table_x_um: Vec<f64>,
    #[serde(rename = "table_S_uM")]
    pub table_s_um: Vec<f64>,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            kind: "traveling-wave".into(),
            s0_um: 500.0,
            sa_um: 100.0,
            ell_um: 800.0,
            u_um_per_s: 0.4,
            ramp_rate_per_s: 0.5,
            ramp_window_s: 100.0,
            m0: 1.0,
            k_i_um: 18.2,
            k_a_um: 3000.0,
            table_x_um: Vec::new(),
            table_s_um: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathwaySection {
    #[serde(rename = "N")]
    pub n_receptors: u32,
    pub alpha: f64,
    pub a0: f64,
    pub z0_per_s: f64,
    pub tau_s: f64,
    #[serde(rename = "H")]
    pub hill: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub noise_enabled: bool,
}

impl Default for PathwaySection {
    fn default() -> Self {
        Self {
            n_receptors: 6,
            alpha: 1.7,
            a0: 0.5,
            z0_per_s: 0.14,
            tau_s: 0.8,
            hill: 10.0,
            sigma: 1.0,
            epsilon: 0.1,
            noise_enabled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub y_halfwidth: f64,
    pub v0_um_per_s: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 200, ny: 128, y_halfwidth: 5.0, v0_um_per_s: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt_s: f64,
    pub t_end_s: f64,
    pub snapshot_every_s: f64,
    pub kernel_mode: KernelMode,
    pub quadrature_order: usize,
    /// Also write the full (x, v, y, q) long-format snapshots (large).
    pub write_full_q: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt_s: 0.15,
            t_end_s: 200.0,
            snapshot_every_s: 20.0,
            kernel_mode: KernelMode::Deterministic,
            quadrature_order: 64,
            write_full_q: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsSection {
    pub n_cells: usize,
    pub dt_agent_s: f64,
    pub snapshot_every_s: f64,
    /// Also dump the per-agent (x, v, m) table at the end (large).
    pub dump_agents: bool,
}

impl Default for AgentsSection {
    fn default() -> Self {
        Self { n_cells: 20_000, dt_agent_s: 1.5e-4, snapshot_every_s: 20.0, dump_agents: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub eps_list: Vec<f64>,
    /// The convergence study resolves the concentrated internal profile on
    /// its own tight y grid.
    pub ny: usize,
    pub y_halfwidth: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { eps_list: vec![0.4, 0.2, 0.1, 0.05], ny: 128, y_halfwidth: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub signal: SignalSection,
    pub pathway: PathwaySection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub agents: AgentsSection,
    pub study: StudySection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_signal(&self) -> Result<SignalField> {
        let s = &self.signal;
        let sensing = LogSensingParams {
            m0: s.m0,
            alpha: self.pathway.alpha,
            k_i: s.k_i_um,
            k_a: s.k_a_um,
        };
        let spec = match s.kind.as_str() {
            "traveling-wave" => SignalSpec::TravelingWave {
                s0: s.s0_um,
                sa: s.sa_um,
                ell: s.ell_um,
                u: s.u_um_per_s,
            },
            "static" => SignalSpec::Static { s0: s.s0_um, sa: s.sa_um, ell: s.ell_um },
            "uniform-ramp" => SignalSpec::UniformRamp {
                s0: s.s0_um,
                rate: s.ramp_rate_per_s,
                window: s.ramp_window_s,
                domain_length: s.ell_um,
            },
            "tabulated" => SignalSpec::Tabulated {
                xs: s.table_x_um.clone(),
                values: s.table_s_um.clone(),
                domain_length: s.ell_um,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown signal kind '{other}' (expected traveling-wave, static, \
                     uniform-ramp or tabulated)"
                )))
            }
        };
        SignalField::new(spec, sensing)
    }

    pub fn build_pathway(&self) -> Result<PathwayParams> {
        let p = PathwayParams {
            n_receptors: self.pathway.n_receptors,
            alpha: self.pathway.alpha,
            a0: self.pathway.a0,
            z0: self.pathway.z0_per_s,
            tau: self.pathway.tau_s,
            hill: self.pathway.hill,
            sigma: self.pathway.sigma,
            epsilon: self.pathway.epsilon,
            noise_enabled: self.pathway.noise_enabled,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn build_vset(&self) -> Result<VelocitySet> {
        VelocitySet::two_velocity(self.grid.v0_um_per_s)
    }

    pub fn build_space(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.signal.ell_um, self.grid.nx)
    }

    pub fn build_full_grid(&self) -> Result<FullGrid> {
        FullGrid::new(self.build_space()?, self.build_vset()?, self.grid.ny, self.grid.y_halfwidth)
    }

    /// Cross-field checks that must hold before any run starts.
    pub fn validate(&self) -> Result<()> {
        let signal = self.build_signal()?;
        let pathway = self.build_pathway()?;
        let space = self.build_space()?;
        let vset = self.build_vset()?;

        if !(self.solver.dt_s > 0.0) || !(self.solver.t_end_s > 0.0) {
            return Err(Error::Config("dt_s and t_end_s must be > 0".into()));
        }
        let cfl = vset.max_speed() * self.solver.dt_s / space.dx;
        if cfl > 0.9 + 1e-12 {
            return Err(Error::Config(format!(
                "transport CFL constraint violated: v0 dt/dx = {cfl:.3} > 0.9"
            )));
        }
        if pathway.lambda_plus() * self.agents.dt_agent_s > 0.2 + 1e-12 {
            return Err(Error::Config(format!(
                "agent thinning bound violated: lambda_plus * dt_agent = {:.3} > 0.2",
                pathway.lambda_plus() * self.agents.dt_agent_s
            )));
        }
        if self.agents.n_cells == 0 {
            return Err(Error::Config("n_cells must be >= 1".into()));
        }
        if !self.study.eps_list.is_empty()
            && !self.study.eps_list.windows(2).all(|w| w[0] > w[1])
        {
            return Err(Error::Config("study eps_list must be strictly decreasing".into()));
        }
        // Ramp runs must stay within the window where M is defined.
        if self.signal.kind == "uniform-ramp" && self.solver.t_end_s > self.signal.ramp_window_s {
            return Err(Error::Config(format!(
                "t_end {} exceeds the ramp window {}",
                self.solver.t_end_s, self.signal.ramp_window_s
            )));
        }
        let _ = signal;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_paper_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.pathway.n_receptors, 6);
        assert_eq!(cfg.pathway.alpha, 1.7);
        assert_eq!(cfg.signal.m0, 1.0);
        assert_eq!(cfg.pathway.a0, 0.5);
        assert_eq!(cfg.pathway.z0_per_s, 0.14);
        assert_eq!(cfg.pathway.tau_s, 0.8);
        assert_eq!(cfg.pathway.hill, 10.0);
        assert_eq!(cfg.signal.k_i_um, 18.2);
        assert_eq!(cfg.signal.k_a_um, 3000.0);
        assert_eq!(cfg.signal.s0_um, 500.0);
        assert_eq!(cfg.signal.sa_um, 100.0);
        assert_eq!(cfg.signal.ell_um, 800.0);
        assert_eq!(cfg.agents.n_cells, 20_000);
        assert_eq!(cfg.signal.u_um_per_s, 0.4);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_field_list() {
        let err = RunConfig::from_toml_str("[pathway]\nbogus_key = 1.0\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("bogus_key"), "{msg}");
        assert!(msg.contains("alpha"), "should list valid keys: {msg}");
    }

    #[test]
    fn cfl_violation_rejected_before_running() {
        let cfg = RunConfig::from_toml_str("[solver]\ndt_s = 1.0\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err}").contains("CFL"));
    }

    #[test]
    fn thinning_violation_rejected() {
        let cfg = RunConfig::from_toml_str("[agents]\ndt_agent_s = 0.01\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err}").contains("thinning"));
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let mut cfg = RunConfig::default();
        cfg.seed = 77;
        cfg.signal.u_um_per_s = 8.0;
        cfg.pathway.epsilon = 0.05;
        cfg.solver.kernel_mode = KernelMode::Noise;
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn spec_keys_parse_as_documented() {
        let text = r#"
            seed = 3
            [signal]
            kind = "traveling-wave"
            S0_uM = 500.0
            SA_uM = 100.0
            ell_um = 800.0
            u_um_per_s = 8.0
            [pathway]
            N = 6
            H = 10.0
            epsilon = 0.2
            [grid]
            nx = 100
            v0_um_per_s = 20.0
        "#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.signal.u_um_per_s, 8.0);
        assert_eq!(cfg.pathway.epsilon, 0.2);
        assert_eq!(cfg.grid.nx, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn ramp_window_guard() {
        let cfg = RunConfig::from_toml_str(
            "[signal]\nkind = \"uniform-ramp\"\nramp_window_s = 5.0\n[solver]\nt_end_s = 10.0\n",
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }
}
