//! Run orchestration: wires configuration, solvers, diagnostics and file
//! output for each CLI subcommand. All entry points stage their outputs and
//! only publish the output directory when the run succeeds.

use crate::config::RunConfig;
use crate::diagnostics::{
    self, l1_distance, phase_shift_comoving, ProfileRecord, SourceModel, StudySetup,
};
use crate::error::{Error, Result};
use crate::output::{self, RunDir, RunMetadata};
use crate::pathway::PathwayParams;
use crate::quadrature::GaussHermite;
use crate::solver_full::{FullSolver, InitSpec};
use crate::solver_limit::LimitSolver;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Builds the worker pool for a run: explicit count, else `RT_THREADS`,
/// else one thread per core.
pub fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = workers
        .or_else(|| std::env::var("RT_THREADS").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Other(format!("thread pool: {e}")))
}

fn metadata_base(command: &str, cfg: &RunConfig) -> Result<RunMetadata> {
    Ok(RunMetadata {
        command: command.to_string(),
        config: cfg.clone(),
        steps: 0,
        mass_drift_rel: 0.0,
        wall_time_s: 0.0,
        derivative_accuracy: cfg.build_signal()?.derivative_accuracy(),
        warnings: Vec::new(),
    })
}

fn steps_for(cfg: &RunConfig) -> (usize, f64, usize) {
    let nsteps = (cfg.solver.t_end_s / cfg.solver.dt_s).round().max(1.0) as usize;
    let dt = cfg.solver.t_end_s / nsteps as f64;
    let stride = ((cfg.solver.snapshot_every_s / dt).round() as usize).max(1);
    (nsteps, dt, stride)
}

/// Writes the final lab-frame profile plus, when the co-moving shift is
/// cell-exact, the co-moving profile; returns a warning otherwise.
fn write_final_profiles(
    dir: &RunDir,
    profile: &ProfileRecord,
    wave_speed: f64,
    warnings: &mut Vec<String>,
) -> Result<()> {
    output::write_profile_csv(&dir.file("profile_final.csv"), profile)?;
    match profile.to_comoving(wave_speed) {
        Ok(com) => output::write_profile_csv(&dir.file("profile_final_comoving.csv"), &com)?,
        Err(e) => warnings.push(format!("co-moving profile skipped: {e}")),
    }
    Ok(())
}

pub fn simulate_full(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<PathBuf> {
    cfg.validate()?;
    let pool = worker_pool(workers)?;
    pool.install(|| simulate_full_inner(cfg, out))
}

fn simulate_full_inner(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let signal = cfg.build_signal()?;
    let pathway = cfg.build_pathway()?;
    let grid = cfg.build_full_grid()?;
    let mut solver = FullSolver::new(grid, signal, pathway)?;
    let init = InitSpec::default();
    solver.validate_coverage(&init, cfg.solver.t_end_s)?;
    let mut state = solver.initialize(&init)?;

    let dir = RunDir::create(out)?;
    let mut meta = metadata_base("simulate-full", cfg)?;
    let (nsteps, dt, stride) = steps_for(cfg);

    let mut conc = std::io::BufWriter::new(std::fs::File::create(dir.file("concentration.csv"))?);
    use std::io::Write;
    writeln!(conc, "t,mass,y_mean,y_variance,second_moment,linf_marginal")?;
    let write_snapshot = |solver: &FullSolver,
                              state: &crate::solver_full::FullKineticState,
                              k: usize,
                              conc: &mut dyn Write|
     -> Result<()> {
        let rec = diagnostics::ConcentrationRecord::from_full(solver, state);
        writeln!(
            conc,
            "{},{},{},{},{},{}",
            output::fmt_f64(state.t),
            output::fmt_f64(solver.mass(state)),
            output::fmt_f64(rec.y_mean),
            output::fmt_f64(rec.y_variance),
            output::fmt_f64(rec.second_moment),
            output::fmt_f64(rec.linf_marginal)
        )?;
        output::write_marginal_csv(
            &dir.file(&format!("marginal_step{k:07}.csv")),
            "qbar",
            &solver.marginal(state),
            &solver.grid.vset,
            &solver.grid.space,
        )?;
        if cfg.solver.write_full_q {
            let y_centers: Vec<f64> = (0..solver.grid.ny).map(|j| solver.grid.y_center(j)).collect();
            output::write_full_q_csv(
                &dir.file(&format!("q_step{k:07}.csv")),
                state.q(),
                &solver.grid.vset,
                &solver.grid.space,
                &y_centers,
            )?;
        }
        Ok(())
    };

    write_snapshot(&solver, &state, 0, &mut conc)?;
    for k in 1..=nsteps {
        solver.step(&mut state, dt)?;
        if k % stride == 0 || k == nsteps {
            write_snapshot(&solver, &state, k, &mut conc)?;
        }
    }
    drop(conc);

    let profile = ProfileRecord::from_full(&solver, &state);
    write_final_profiles(&dir, &profile, solver.signal.wave_speed(), &mut meta.warnings)?;

    meta.steps = nsteps;
    meta.mass_drift_rel =
        (solver.mass(&state) - state.total_mass_initial).abs() / state.total_mass_initial;
    meta.wall_time_s = start.elapsed().as_secs_f64();
    output::write_metadata(&dir.file("metadata.json"), &meta)?;
    dir.finalize()
}

pub fn simulate_limit(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<PathBuf> {
    cfg.validate()?;
    let pool = worker_pool(workers)?;
    pool.install(|| simulate_limit_inner(cfg, out))
}

fn simulate_limit_inner(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let mut solver = LimitSolver::new(
        cfg.build_space()?,
        cfg.build_vset()?,
        cfg.build_signal()?,
        cfg.build_pathway()?,
        cfg.solver.kernel_mode,
        cfg.solver.quadrature_order,
    )?;
    let mut state = solver.initialize_uniform();

    let dir = RunDir::create(out)?;
    let mut meta = metadata_base("simulate-limit", cfg)?;
    let (nsteps, dt, stride) = steps_for(cfg);

    let snapshot = |solver: &LimitSolver, state: &crate::solver_limit::LimitKineticState, k: usize| -> Result<()> {
        output::write_marginal_csv(
            &dir.file(&format!("pbar_step{k:07}.csv")),
            "pbar",
            state.pbar(),
            &solver.vset,
            &solver.space,
        )
    };
    snapshot(&solver, &state, 0)?;
    for k in 1..=nsteps {
        solver.step(&mut state, dt)?;
        if k % stride == 0 || k == nsteps {
            snapshot(&solver, &state, k)?;
        }
    }

    let profile = ProfileRecord::from_limit(&solver, &state);
    write_final_profiles(&dir, &profile, solver.signal.wave_speed(), &mut meta.warnings)?;

    meta.steps = nsteps;
    meta.mass_drift_rel =
        (solver.mass(&state) - state.total_mass_initial).abs() / state.total_mass_initial;
    meta.wall_time_s = start.elapsed().as_secs_f64();
    output::write_metadata(&dir.file("metadata.json"), &meta)?;
    dir.finalize()
}

pub fn simulate_agents(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<PathBuf> {
    cfg.validate()?;
    let pool = worker_pool(workers)?;
    pool.install(|| simulate_agents_inner(cfg, out))
}

fn simulate_agents_inner(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let signal = cfg.build_signal()?;
    let mut pop = crate::agents::AgentPopulation::init(
        cfg.agents.n_cells,
        cfg.seed,
        cfg.build_vset()?,
        &signal,
        cfg.build_pathway()?,
    )?;

    let dir = RunDir::create(out)?;
    let mut meta = metadata_base("simulate-agents", cfg)?;
    let nsteps = (cfg.solver.t_end_s / cfg.agents.dt_agent_s).round().max(1.0) as usize;
    let dt = cfg.solver.t_end_s / nsteps as f64;
    let stride = ((cfg.agents.snapshot_every_s / dt).round() as usize).max(1);

    let snapshot = |pop: &crate::agents::AgentPopulation, k: usize| -> Result<()> {
        let profile = ProfileRecord::from_agents(pop, cfg.grid.nx);
        output::write_profile_csv(&dir.file(&format!("profile_step{k:09}.csv")), &profile)
    };
    snapshot(&pop, 0)?;
    for k in 1..=nsteps {
        pop.step(&signal, dt)?;
        if k % stride == 0 || k == nsteps {
            snapshot(&pop, k)?;
        }
    }

    // Lab-frame final profile plus an exactly binned co-moving profile.
    let profile = ProfileRecord::from_agents(&pop, cfg.grid.nx);
    output::write_profile_csv(&dir.file("profile_final.csv"), &profile)?;
    let (rho, flux) = pop.bin_comoving(cfg.grid.nx, signal.wave_speed());
    let com = ProfileRecord::new(pop.t, profile.dx, rho, flux, SourceModel::Agents);
    output::write_profile_csv(&dir.file("profile_final_comoving.csv"), &com)?;
    if cfg.agents.dump_agents {
        output::write_agents_csv(&dir.file("agents_final.csv"), &pop)?;
    }

    meta.steps = nsteps;
    meta.wall_time_s = start.elapsed().as_secs_f64();
    output::write_metadata(&dir.file("metadata.json"), &meta)?;
    dir.finalize()
}

/// Tabulates the bulk kernels over a symmetric range of path-wise
/// derivatives (includes u = 0 exactly).
pub fn kernel_table(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let pathway: PathwayParams = cfg.build_pathway()?;
    let quad = GaussHermite::new(cfg.solver.quadrature_order)?;
    let n = 201usize;
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let u = -5.0 + 10.0 * i as f64 / (n - 1) as f64;
            (u, pathway.kernel_deterministic(u), pathway.kernel_noise(u, &quad))
        })
        .collect();
    let dir = RunDir::create(out)?;
    output::write_kernel_csv(&dir.file("kernel.csv"), &rows)?;
    let meta = metadata_base("kernel", cfg)?;
    output::write_metadata(&dir.file("metadata.json"), &meta)?;
    dir.finalize()
}

pub fn convergence(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<PathBuf> {
    cfg.validate()?;
    let pool = worker_pool(workers)?;
    pool.install(|| convergence_inner(cfg, out))
}

fn convergence_inner(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let signal = cfg.build_signal()?;
    let pathway = cfg.build_pathway()?;
    // The concentrated internal profile lives within a few |D_t M|/G(0) of
    // zero; the study grid and initial spread are sized to resolve it.
    let y_halfwidth = cfg.study.y_halfwidth;
    let init_var = (y_halfwidth / 6.0) * (y_halfwidth / 6.0);
    let setup = StudySetup {
        signal: &signal,
        pathway: &pathway,
        space: cfg.build_space()?,
        vset: cfg.build_vset()?,
        ny: cfg.study.ny,
        y_halfwidth,
        init: InitSpec::GaussianY { variance: Some(init_var) },
        dt: cfg.solver.dt_s,
        t_end: cfg.solver.t_end_s,
        kernel_mode: cfg.solver.kernel_mode,
        quadrature_order: cfg.solver.quadrature_order,
    };
    let outcome = diagnostics::convergence_study(&setup, &cfg.study.eps_list)?;

    let dir = RunDir::create(out)?;
    output::write_study_csv(&dir.file("study.csv"), &outcome)?;
    let verdict = serde_json::to_string_pretty(&outcome.verdict)
        .map_err(|e| Error::Other(format!("verdict serialization: {e}")))?;
    std::fs::write(dir.file("verdict.json"), verdict + "\n")?;
    let mut meta = metadata_base("convergence", cfg)?;
    meta.wall_time_s = start.elapsed().as_secs_f64();
    output::write_metadata(&dir.file("metadata.json"), &meta)?;
    println!(
        "convergence verdict: {}",
        if outcome.verdict.pass { "PASS" } else { "FAIL" }
    );
    for r in &outcome.rows {
        println!(
            "  epsilon={:<6} l1_rho={:.5} l1_J={:.5} y_var={:.3e} mass_drift={:.2e}",
            r.epsilon, r.l1_rho, r.l1_flux, r.y_variance_final, r.mass_drift_rel
        );
    }
    dir.finalize()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub l1_rho: f64,
    pub l1_flux: f64,
    pub phase_shift_a_um: Option<f64>,
    pub phase_shift_b_um: Option<f64>,
    pub phase_diff_um: Option<f64>,
    pub comoving: bool,
}

/// Pairwise comparison of two finished run directories.
pub fn compare(dir_a: &Path, dir_b: &Path, out: Option<&Path>) -> Result<CompareReport> {
    let meta_a = output::read_metadata(&dir_a.join("metadata.json"))?;
    let comoving_a = dir_a.join("profile_final_comoving.csv");
    let comoving_b = dir_b.join("profile_final_comoving.csv");
    let comoving = comoving_a.exists() && comoving_b.exists();
    let (pa, pb) = if comoving {
        (
            output::read_profile_csv(&comoving_a, 0.0, SourceModel::Full)?,
            output::read_profile_csv(&comoving_b, 0.0, SourceModel::Full)?,
        )
    } else {
        (
            output::read_profile_csv(&dir_a.join("profile_final.csv"), 0.0, SourceModel::Full)?,
            output::read_profile_csv(&dir_b.join("profile_final.csv"), 0.0, SourceModel::Full)?,
        )
    };
    let (l1_rho, l1_flux) = l1_distance(&pa, &pb)?;

    let signal = meta_a.config.build_signal()?;
    let (psa, psb, pdiff) = if comoving {
        let a = phase_shift_comoving(&pa.rho, pa.dx, &signal).ok();
        let b = phase_shift_comoving(&pb.rho, pb.dx, &signal).ok();
        let d = match (a, b) {
            (Some(a), Some(b)) => Some(diagnostics::circular_distance(a, b, pa.length)),
            _ => None,
        };
        (a, b, d)
    } else {
        (None, None, None)
    };

    let report = CompareReport {
        l1_rho,
        l1_flux,
        phase_shift_a_um: psa,
        phase_shift_b_um: psb,
        phase_diff_um: pdiff,
        comoving,
    };
    println!(
        "compare: l1_rho={:.5} l1_J={:.5} phase_diff={}",
        report.l1_rho,
        report.l1_flux,
        report
            .phase_diff_um
            .map(|d| format!("{d:+.2} um"))
            .unwrap_or_else(|| "n/a".into())
    );
    if let Some(out) = out {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Other(format!("report serialization: {e}")))?;
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("compare.json"), text + "\n")?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.grid.nx = 16;
        cfg.grid.ny = 32;
        cfg.grid.y_halfwidth = 3.0;
        cfg.solver.dt_s = 0.15;
        cfg.solver.t_end_s = 3.0;
        cfg.solver.snapshot_every_s = 1.5;
        cfg.agents.n_cells = 500;
        cfg.agents.snapshot_every_s = 1.5;
        cfg.pathway.epsilon = 0.3;
        cfg
    }

    #[test]
    fn simulate_limit_static_uniform_stays_flat() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        cfg.signal.kind = "static".into();
        cfg.signal.sa_um = 0.0;
        let out = simulate_limit(&cfg, &dir.path().join("run"), Some(2)).unwrap();
        let p = output::read_profile_csv(&out.join("profile_final.csv"), 0.0, SourceModel::Limit)
            .unwrap();
        let mean = p.rho.iter().sum::<f64>() / p.rho.len() as f64;
        for &r in &p.rho {
            assert!((r - mean).abs() < 1e-12 * mean.max(1.0), "rho not flat");
        }
        assert!(out.join("metadata.json").exists());
    }

    #[test]
    fn byte_identical_outputs_across_worker_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg();
        let out1 = simulate_full(&cfg, &dir.path().join("w1"), Some(1)).unwrap();
        let out4 = simulate_full(&cfg, &dir.path().join("w4"), Some(4)).unwrap();
        for name in ["profile_final.csv", "concentration.csv"] {
            let a = std::fs::read(out1.join(name)).unwrap();
            let b = std::fs::read(out4.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between worker counts");
        }

        let a1 = simulate_agents(&cfg, &dir.path().join("a1"), Some(1)).unwrap();
        let a4 = simulate_agents(&cfg, &dir.path().join("a4"), Some(4)).unwrap();
        let a = std::fs::read(a1.join("profile_final.csv")).unwrap();
        let b = std::fs::read(a4.join("profile_final.csv")).unwrap();
        assert_eq!(a, b, "agent profiles differ between worker counts");
    }

    #[test]
    fn kernel_table_has_exact_zero_row() {
        let dir = tempfile::tempdir().unwrap();
        let out = kernel_table(&RunConfig::default(), &dir.path().join("k")).unwrap();
        let text = std::fs::read_to_string(out.join("kernel.csv")).unwrap();
        let zero_row = text
            .lines()
            .find(|l| l.starts_with("0.0000000000000000e0,"))
            .expect("u=0 row present");
        let t_det: f64 = zero_row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((t_det - 1.39).abs() < 1e-6);
    }

    #[test]
    fn compare_on_own_output_is_zero_distance() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg();
        let out = simulate_limit(&cfg, &dir.path().join("run"), Some(2)).unwrap();
        let report = compare(&out, &out, None).unwrap();
        assert_eq!(report.l1_rho, 0.0);
        assert_eq!(report.l1_flux, 0.0);
    }
}
