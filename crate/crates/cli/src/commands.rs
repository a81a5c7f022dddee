//! Subcommand implementations; `main` only parses arguments and maps errors
//! to exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use esbgk_core::diagnostics::{
    default_t_samples, derive_constants as derive, hypothesis_check, DerivedConstants, HypothesisReport,
    HypothesisSettings, Monitor,
};
use esbgk_core::gaussian::maxwellian_profile;
use esbgk_core::integrator::{default_dt, run as integrate, Cadence, RunSink};
use esbgk_core::scenarios::{build_initial, free_stream_mode, initial_density};
use esbgk_core::snapshot::{read_snapshot, write_snapshot};
use esbgk_core::{build_grid, compute_moments, DistributionField, PhaseGrid, Solver};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::series::{CsvSeries, SnapshotDir};

pub const SERIES_FILE: &str = "series.csv";
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const FINAL_SNAPSHOT: &str = "final.esbg";

pub fn grid_of(cfg: &RunConfig) -> Result<Arc<PhaseGrid>, CliError> {
    Ok(Arc::new(build_grid(&cfg.grid_spec()?)?))
}

pub fn initial_field(cfg: &RunConfig) -> Result<DistributionField, CliError> {
    Ok(build_initial(&cfg.scenario(), grid_of(cfg)?)?)
}

/// Step size and count after applying `run.t_end`.
pub fn resolve_steps(cfg: &RunConfig, f0: &DistributionField) -> Result<(f64, usize), CliError> {
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => default_dt(f0.grid(), cfg.nu, f0)?,
    };
    Ok(match cfg.t_end {
        Some(t) => {
            let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
            (t / n as f64, n)
        }
        None => (dt, cfg.n_steps),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub records: usize,
    pub max_defect: f64,
    pub entropy_up: usize,
    pub fallbacks: usize,
    pub masked: usize,
    pub min_ck_gap: f64,
    pub macro_dev_first: f64,
    pub macro_dev_last: f64,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "dt = {:.16e}", self.dt);
        let _ = writeln!(s, "t_final = {:.16e}", self.t_final);
        let _ = writeln!(s, "records = {}", self.records);
        let _ = writeln!(s, "max_defect = {:.3e}", self.max_defect);
        let _ = writeln!(s, "entropy_up = {}", self.entropy_up);
        let _ = writeln!(s, "fallbacks = {}", self.fallbacks);
        let _ = writeln!(s, "masked = {}", self.masked);
        let _ = writeln!(s, "min_ck_gap = {:.3e}", self.min_ck_gap);
        let _ = writeln!(s, "macro_dev = {:.6e} -> {:.6e}", self.macro_dev_first, self.macro_dev_last);
        s
    }
}

/// Runs the configured scenario, writing `series.csv`, snapshots and the
/// final state into the output directory. A failing sink leaves a
/// `PARTIAL` marker next to whatever was written.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let out_dir = &cfg.output;
    fs::create_dir_all(out_dir)?;
    let f0 = initial_field(cfg)?;
    let (dt, n_steps) = resolve_steps(cfg, &f0)?;
    fs::write(out_dir.join("config.cfg"), cfg.to_text())?;
    let _ = fs::remove_file(out_dir.join(PARTIAL_MARKER));

    let mut solver = Solver::new(Arc::clone(f0.grid_arc()), cfg.nu, cfg.step_config(dt))?;
    let mut monitor = Monitor::new(&f0, cfg.nu, cfg.beta)?;
    let mut series = CsvSeries::create(&out_dir.join(SERIES_FILE))?;
    let mut snaps = SnapshotDir { dir: out_dir.clone() };
    let cadence = Cadence {
        record_every: cfg.record_every,
        snapshot_every: cfg.snapshot_every,
    };
    let out = {
        let mut sinks: Vec<&mut dyn RunSink> = vec![&mut series];
        if cfg.snapshot_every > 0 {
            sinks.push(&mut snaps);
        }
        integrate(&mut solver, f0, n_steps, cadence, &mut monitor, &mut sinks)?
    };
    let flushed = series.finish();
    let abort = match (&out.aborted, flushed) {
        (Some(msg), _) => Some(msg.clone()),
        (None, Err(e)) => Some(e.to_string()),
        (None, Ok(_)) => None,
    };
    if let Some(msg) = abort {
        fs::write(
            out_dir.join(PARTIAL_MARKER),
            format!("steps_completed = {}\nreason = {msg}\n", out.steps_completed),
        )?;
        return Err(CliError::Aborted(msg));
    }
    write_snapshot(&out.field, &out_dir.join(FINAL_SNAPSHOT))?;

    let recs = &out.records;
    let mut flags = esbgk_core::DiagnosticFlags::default();
    for r in recs {
        flags.entropy_up += r.flags.entropy_up;
        flags.fallbacks += r.flags.fallbacks;
        flags.masked += r.flags.masked;
    }
    Ok(RunSummary {
        steps: out.steps_completed,
        dt,
        t_final: out.field.time,
        records: recs.len(),
        max_defect: recs.iter().map(|r| r.defects.max_abs()).fold(0.0, f64::max),
        entropy_up: flags.entropy_up,
        fallbacks: flags.fallbacks,
        masked: flags.masked,
        min_ck_gap: recs
            .iter()
            .map(|r| r.ck_gap)
            .filter(|g| !g.is_nan())
            .fold(f64::INFINITY, f64::min),
        macro_dev_first: recs.first().map_or(f64::NAN, |r| r.macro_dev),
        macro_dev_last: recs.last().map_or(f64::NAN, |r| r.macro_dev),
    })
}

/// Evaluates the hypotheses for the configured initial data. Separable
/// scenarios are streamed exactly in `x`; others by grid interpolation.
pub fn check_hypotheses(cfg: &RunConfig) -> Result<HypothesisReport, CliError> {
    let spec = cfg.scenario();
    let grid = grid_of(cfg)?;
    let f0 = build_initial(&spec, Arc::clone(&grid))?;
    let density = initial_density(&spec, &grid);
    let mu = maxwellian_profile(&grid);
    let how = free_stream_mode(density.as_ref(), &mu);
    let settings = HypothesisSettings {
        nu: cfg.nu,
        beta: cfg.beta,
        c0: cfg.c0,
        eps0: cfg.eps0,
    };
    Ok(hypothesis_check(&f0, how, &default_t_samples(cfg.nu, cfg.t_samples), settings)?)
}

pub fn derive_constants(cfg: &RunConfig) -> Result<DerivedConstants, CliError> {
    let grid = grid_of(cfg)?;
    Ok(derive(cfg.nu, cfg.beta, &grid, cfg.calibration_samples, cfg.seed)?)
}

pub const MOMENTS_HEADER: &str =
    "cell,x,y,z,rho,ux,uy,uz,T,theta_xx,theta_yy,theta_zz,theta_xy,theta_xz,theta_yz,masked";

/// Per-cell macroscopic table of a snapshot.
pub fn moments_table(path: &Path, nu: f64) -> Result<String, CliError> {
    let f = read_snapshot(path)?;
    let m = compute_moments(&f, nu)?;
    let mut s = String::from(MOMENTS_HEADER);
    s.push('\n');
    for (c, st) in m.cells.iter().enumerate() {
        let x = f.grid().cell_position(c);
        let vals = [
            x[0],
            x[1],
            x[2],
            st.rho,
            st.u[0],
            st.u[1],
            st.u[2],
            st.temperature,
        ]
        .into_iter()
        .chain(st.theta.0);
        let _ = write!(s, "{c}");
        for v in vals {
            let _ = write!(s, ",{v:.16e}");
        }
        let _ = writeln!(s, ",{}", m.masked[c]);
    }
    Ok(s)
}
