//! Result emission: run directories, CSV files and replay manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::evaluation::{cdf, pooled_rates, run_monte_carlo, TrialResult};
use crate::geometry::UserClass;

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FH_TRACE_FILE: &str = "fh_trace.csv";

pub fn cdf_file(class: UserClass) -> String {
    format!("cdf_{}.csv", class.as_str())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub results: Vec<TrialResult>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SimError::io(path, e))
}

/// Config echo preceded by a version comment; loadable with `--config`.
pub fn manifest_text(cfg: &SimConfig) -> String {
    format!(
        "# cfmc {}\n# replay: cfmc run --config {MANIFEST_FILE}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_toml_string()
    )
}

pub fn write_results_csv<W: Write>(results: &[TrialResult], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["trial", "user_id", "class", "scenario", "precoder", "alpha", "rate_bps", "sinr_db"])?;
    for r in results {
        for u in &r.users {
            wtr.write_record([
                r.trial.to_string(),
                u.user_id.to_string(),
                u.class.as_str().to_string(),
                r.scenario.as_str().to_string(),
                r.precoder.as_str().to_string(),
                r.alpha.to_string(),
                u.rate_bps.to_string(),
                (10.0 * u.sinr.log10()).to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| SimError::io(RESULTS_FILE, e))?;
    Ok(())
}

pub fn write_cdf_csv<W: Write>(samples: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["rate_bps", "fraction"])?;
    for (x, f) in cdf(samples) {
        wtr.write_record([x.to_string(), f.to_string()])?;
    }
    wtr.flush().map_err(|e| SimError::io("<cdf>", e))?;
    Ok(())
}

pub fn write_fh_trace_csv<W: Write>(results: &[TrialResult], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["trial", "iteration", "node_id", "F_n", "removed_user"])?;
    for r in results {
        for row in r.fh_trace.iter().flat_map(|t| &t.rows) {
            wtr.write_record([
                r.trial.to_string(),
                row.iteration.to_string(),
                row.node_id.to_string(),
                row.load.to_string(),
                row.removed_user.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| SimError::io(FH_TRACE_FILE, e))?;
    Ok(())
}

/// Runs the simulation and writes every output file into `out_dir`. The
/// directory is created and the manifest written before any trial runs,
/// so an unwritable destination fails fast.
pub fn run_command(cfg: &SimConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| SimError::io(out_dir, e))?;
    let manifest = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest, manifest_text(cfg)).map_err(|e| SimError::io(&manifest, e))?;
    let mut files = vec![manifest];

    info!(
        "running {} trials: scenario {}, precoder {}, K = {}",
        cfg.trials,
        cfg.scenario.as_str(),
        cfg.precoder.as_str(),
        cfg.n_ues()
    );
    let results = run_monte_carlo(cfg)?;

    let path = out_dir.join(RESULTS_FILE);
    write_results_csv(&results, create(&path)?)?;
    files.push(path);
    for class in [UserClass::CellInside, UserClass::CellEdge] {
        let path = out_dir.join(cdf_file(class));
        write_cdf_csv(&pooled_rates(&results, class), create(&path)?)?;
        files.push(path);
    }
    if cfg.fronthaul_enforce {
        let path = out_dir.join(FH_TRACE_FILE);
        write_fh_trace_csv(&results, create(&path)?)?;
        files.push(path);
    }
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        results,
    })
}

pub fn sweep_dir_name(alpha: f64) -> String {
    format!("alpha_{alpha}")
}

/// One run per `alpha`, each in its own subdirectory of `out_dir`.
pub fn sweep_command(cfg: &SimConfig, alphas: &[f64], out_dir: &Path) -> Result<Vec<RunSummary>> {
    alphas
        .iter()
        .map(|&alpha| {
            let c = SimConfig { alpha, ..cfg.clone() };
            run_command(&c, &out_dir.join(sweep_dir_name(alpha)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parses_back() {
        let cfg = SimConfig {
            alpha: 0.5,
            trials: 3,
            ..SimConfig::desk()
        };
        assert_eq!(SimConfig::from_toml_str(&manifest_text(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn unwritable_output_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let cfg = SimConfig {
            trials: 1,
            ..SimConfig::desk()
        };
        assert!(matches!(run_command(&cfg, &blocker.join("out")), Err(SimError::Io { .. })));
    }

    #[test]
    fn cdf_csv_format() {
        let mut buf = Vec::new();
        write_cdf_csv(&[2.0, 1.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rate_bps,fraction\n1,0.5\n2,1\n");
    }
}
