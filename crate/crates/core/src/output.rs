//! CSV and JSON writers. Floating-point values are written with 17
//! significant digits so byte-level reproducibility is meaningful.

use crate::config::RunConfig;
use crate::diagnostics::{ProfileRecord, SourceModel, StudyOutcome};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, VelocitySet};
use crate::signal::DerivativeAccuracy;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[inline]
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn open(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// `x,rho,J` profile snapshot.
pub fn write_profile_csv(path: &Path, p: &ProfileRecord) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "x,rho,J")?;
    for i in 0..p.rho.len() {
        let x = (i as f64 + 0.5) * p.dx;
        writeln!(w, "{},{},{}", fmt_f64(x), fmt_f64(p.rho[i]), fmt_f64(p.flux[i]))?;
    }
    Ok(())
}

pub fn read_profile_csv(path: &Path, t: f64, source: SourceModel) -> Result<ProfileRecord> {
    let text = fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut rho = Vec::new();
    let mut flux = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 {
            if line.trim() != "x,rho,J" {
                return Err(Error::Other(format!("unexpected profile header: {line}")));
            }
            continue;
        }
        let mut parts = line.split(',');
        let mut next = || -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::Other(format!("short row {n} in {}", path.display())))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Other(format!("bad number in row {n}: {e}")))
        };
        xs.push(next()?);
        rho.push(next()?);
        flux.push(next()?);
    }
    if xs.len() < 2 {
        return Err(Error::Other("profile CSV has fewer than two rows".into()));
    }
    let dx = xs[1] - xs[0];
    Ok(ProfileRecord::new(t, dx, rho, flux, source))
}

/// `x,v,<name>` marginal snapshot, layout `[x][v]`.
pub fn write_marginal_csv(
    path: &Path,
    name: &str,
    marginal: &[f64],
    vset: &VelocitySet,
    space: &SpatialGrid,
) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "x,v,{name}")?;
    for ix in 0..space.nx {
        let x = space.x_center(ix);
        for iv in 0..vset.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(x),
                fmt_f64(vset.speed(iv)),
                fmt_f64(marginal[ix * vset.len() + iv])
            )?;
        }
    }
    Ok(())
}

/// Long-format `x,v,y,q` dump of the full kinetic state.
pub fn write_full_q_csv(
    path: &Path,
    q: &[f64],
    vset: &VelocitySet,
    space: &SpatialGrid,
    y_centers: &[f64],
) -> Result<()> {
    let ny = y_centers.len();
    let mut w = open(path)?;
    writeln!(w, "x,v,y,q")?;
    for ix in 0..space.nx {
        let x = space.x_center(ix);
        for iv in 0..vset.len() {
            let base = (ix * vset.len() + iv) * ny;
            for (j, &y) in y_centers.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f64(x),
                    fmt_f64(vset.speed(iv)),
                    fmt_f64(y),
                    fmt_f64(q[base + j])
                )?;
            }
        }
    }
    Ok(())
}

/// `x,v,m` per-agent dump.
pub fn write_agents_csv(path: &Path, pop: &crate::agents::AgentPopulation) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "x,v,m")?;
    for a in pop.agents() {
        writeln!(
            w,
            "{},{},{}",
            fmt_f64(a.x),
            fmt_f64(pop.vset.speed(a.v_idx as usize)),
            fmt_f64(a.m)
        )?;
    }
    Ok(())
}

/// `u,T_deterministic,T_noise` kernel tabulation.
pub fn write_kernel_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "u,T_deterministic,T_noise")?;
    for &(u, td, tn) in rows {
        writeln!(w, "{},{},{}", fmt_f64(u), fmt_f64(td), fmt_f64(tn))?;
    }
    Ok(())
}

/// `epsilon,l1_rho,l1_J,second_moment_max,y_variance_final` study table.
pub fn write_study_csv(path: &Path, outcome: &StudyOutcome) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "epsilon,l1_rho,l1_J,second_moment_max,y_variance_final")?;
    for r in &outcome.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(r.epsilon),
            fmt_f64(r.l1_rho),
            fmt_f64(r.l1_flux),
            fmt_f64(r.second_moment_max),
            fmt_f64(r.y_variance_final)
        )?;
    }
    Ok(())
}

/// Run metadata; embeds the full configuration so a run can be reproduced
/// from its output directory alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub config: RunConfig,
    pub steps: usize,
    pub mass_drift_rel: f64,
    pub wall_time_s: f64,
    pub derivative_accuracy: DerivativeAccuracy,
    pub warnings: Vec<String>,
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    let mut w = open(path)?;
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Other(format!("metadata serialization: {e}")))?;
    w.write_all(text.as_bytes())?;
    writeln!(w)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Other(format!("metadata parse: {e}")))
}

/// Output directory that stages files in a `.partial` sibling and only takes
/// its final name on success; failures remove the staged files.
pub struct RunDir {
    staging: PathBuf,
    target: PathBuf,
    finalized: bool,
}

impl RunDir {
    pub fn create(target: &Path) -> Result<Self> {
        let staging = target.with_extension("partial");
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(Self { staging, target: target.to_path_buf(), finalized: false })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    pub fn finalize(mut self) -> Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&self.staging, &self.target)?;
        self.finalized = true;
        Ok(self.target.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.finalized && self.staging.exists() {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::SourceModel;

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = ProfileRecord::new(
            1.5,
            4.0,
            vec![0.1, 0.2, 0.3, 0.15],
            vec![0.0, -0.5, 0.5, 0.0],
            SourceModel::Limit,
        );
        write_profile_csv(&path, &p).unwrap();
        let q = read_profile_csv(&path, 1.5, SourceModel::Limit).unwrap();
        assert_eq!(p.rho, q.rho);
        assert_eq!(p.flux, q.flux);
        assert_eq!(p.dx, q.dx);
    }

    #[test]
    fn run_dir_cleans_up_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        {
            let rd = RunDir::create(&target).unwrap();
            std::fs::write(rd.file("x.csv"), "data").unwrap();
            // Dropped without finalize: simulated failure.
        }
        assert!(!target.exists());
        assert!(!target.with_extension("partial").exists());

        let rd = RunDir::create(&target).unwrap();
        std::fs::write(rd.file("x.csv"), "data").unwrap();
        let final_path = rd.finalize().unwrap();
        assert!(final_path.join("x.csv").exists());
    }

    #[test]
    fn formatted_floats_round_trip_exactly() {
        for &x in &[1.39, 0.1 + 0.2, std::f64::consts::PI, 1.0e-300, -4.5e17] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
