//! Run configuration in a line-based `section.key = value` format.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! [`RunConfig::to_text`] writes every key in a fixed order, so parsing its
//! output gives back the same configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use esbgk_core::grid::{GridSpec, InterpOrder, VelocityPlacement};
use esbgk_core::integrator::{MatchingMode, RelaxationMode};
use esbgk_core::gaussian::MatchSettings;
use esbgk_core::linalg::Sym3;
use esbgk_core::scenarios::{ScenarioKind, ScenarioSpec};
use esbgk_core::StepConfig;

use crate::error::CliError;

/// Which weight exponent range is admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelMode {
    /// Global statements: `β > 7`.
    Theorem,
    /// Short-time statements only: `β > 5`.
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Equilibrium,
    DensityWave,
    DensityStep,
    AnisotropicHomogeneous,
    Table,
}

const KINDS: [(Kind, &str); 5] = [
    (Kind::Equilibrium, "equilibrium"),
    (Kind::DensityWave, "density_wave"),
    (Kind::DensityStep, "density_step"),
    (Kind::AnisotropicHomogeneous, "anisotropic_homogeneous"),
    (Kind::Table, "table"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub nu: f64,
    pub beta: f64,
    pub mode: ModelMode,

    pub dims: usize,
    pub length: Vec<f64>,
    pub cells: Vec<usize>,
    pub v_max: f64,
    pub nv: usize,

    /// `None`: the accuracy-based default step.
    pub dt: Option<f64>,
    pub order: u32,
    pub picard: bool,
    pub picard_k: u32,
    pub matching: MatchingMode,
    pub match_tol: f64,
    pub match_max_iter: u32,

    pub kind: Kind,
    pub amplitude: f64,
    pub wavenumber: Vec<i64>,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// `[xx, yy, zz, xy, xz, yz]`
    pub sigma: [f64; 6],
    pub table: Option<PathBuf>,
    pub normalize: bool,

    pub n_steps: usize,
    /// When set, overrides `n_steps` and shrinks `dt` to land on it.
    pub t_end: Option<f64>,
    pub record_every: usize,
    pub snapshot_every: usize,

    pub output: PathBuf,

    pub c0: f64,
    pub eps0: f64,
    pub t_samples: usize,

    pub calibration_samples: usize,
    pub seed: u64,
    pub verify_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nu: 0.5,
            beta: 8.0,
            mode: ModelMode::Theorem,
            dims: 1,
            length: vec![2.0 * PI],
            cells: vec![32],
            v_max: 6.0,
            nv: 16,
            dt: None,
            order: 1,
            picard: false,
            picard_k: 2,
            matching: MatchingMode::Matched,
            match_tol: MatchSettings::default().tol,
            match_max_iter: MatchSettings::default().max_iter,
            kind: Kind::DensityWave,
            amplitude: 0.5,
            wavenumber: vec![1],
            rho_lo: 0.5,
            rho_hi: 1.5,
            sigma: [2.0, 0.5, 0.5, 0.0, 0.0, 0.0],
            table: None,
            normalize: true,
            n_steps: 100,
            t_end: None,
            record_every: 1,
            snapshot_every: 0,
            output: PathBuf::from("out"),
            c0: 0.0,
            eps0: 1.0,
            t_samples: 32,
            calibration_samples: 256,
            seed: 0,
            verify_samples: 16,
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| bad(key, format!("cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|p| scalar(key, p.trim())).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got {v:?}"))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn join_f(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(&format!("line {}", n + 1), format!("expected key = value, got {raw:?}")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value, without cross-field validation.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "model.nu" => self.nu = scalar(key, v)?,
            "model.beta" => self.beta = scalar(key, v)?,
            "model.mode" => {
                self.mode = match v {
                    "theorem" => ModelMode::Theorem,
                    "local" => ModelMode::Local,
                    _ => return Err(bad(key, format!("expected theorem or local, got {v:?}"))),
                }
            }
            "grid.spatial_dims" => self.dims = scalar(key, v)?,
            "grid.extent" => self.length = list(key, v)?,
            "grid.counts" => self.cells = list(key, v)?,
            "grid.v_max" => self.v_max = scalar(key, v)?,
            "grid.nv" => self.nv = scalar(key, v)?,
            "step.dt" => self.dt = if v == "auto" { None } else { Some(scalar(key, v)?) },
            "step.order" => self.order = scalar(key, v)?,
            "step.relaxation" => {
                self.picard = match v {
                    "explicit" => false,
                    "picard" => true,
                    _ => return Err(bad(key, format!("expected explicit or picard, got {v:?}"))),
                }
            }
            "step.picard_k" => self.picard_k = scalar(key, v)?,
            "step.matching" => {
                self.matching = match v {
                    "matched" => MatchingMode::Matched,
                    "analytic" => MatchingMode::Analytic,
                    _ => return Err(bad(key, format!("expected matched or analytic, got {v:?}"))),
                }
            }
            "step.match_tol" => self.match_tol = scalar(key, v)?,
            "step.match_max_iter" => self.match_max_iter = scalar(key, v)?,
            "scenario.kind" => {
                self.kind = KINDS
                    .iter()
                    .find(|(_, name)| *name == v)
                    .map(|(k, _)| *k)
                    .ok_or_else(|| bad(key, format!("unknown scenario {v:?}")))?
            }
            "scenario.amplitude" => self.amplitude = scalar(key, v)?,
            "scenario.wavenumber" => self.wavenumber = list(key, v)?,
            "scenario.rho_lo" => self.rho_lo = scalar(key, v)?,
            "scenario.rho_hi" => self.rho_hi = scalar(key, v)?,
            "scenario.sigma" => {
                let s: Vec<f64> = list(key, v)?;
                self.sigma = s
                    .try_into()
                    .map_err(|_| bad(key, "expected six entries xx, yy, zz, xy, xz, yz"))?;
            }
            "scenario.path" => self.table = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "scenario.normalize" => self.normalize = boolean(key, v)?,
            "run.n_steps" => self.n_steps = scalar(key, v)?,
            "run.t_end" => self.t_end = if v == "none" { None } else { Some(scalar(key, v)?) },
            "run.record_every" => self.record_every = scalar(key, v)?,
            "run.snapshot_every" => self.snapshot_every = scalar(key, v)?,
            "output.dir" => self.output = PathBuf::from(v),
            "check.c0" => self.c0 = scalar(key, v)?,
            "check.eps0" => self.eps0 = scalar(key, v)?,
            "check.t_samples" => self.t_samples = scalar(key, v)?,
            "calibration.samples" => self.calibration_samples = scalar(key, v)?,
            "calibration.seed" => self.seed = scalar(key, v)?,
            "verify.samples" => self.verify_samples = scalar(key, v)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key=value` overrides and revalidates.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| bad(p, "override must look like key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        esbgk_core::moments::validate_nu(self.nu).map_err(|_| bad("model.nu", format!("must lie in (-1/2, 1), got {}", self.nu)))?;
        let floor = match self.mode {
            ModelMode::Theorem => 7.0,
            ModelMode::Local => 5.0,
        };
        if !(self.beta > floor && self.beta.is_finite()) {
            return Err(bad("model.beta", format!("must exceed {floor} in this mode, got {}", self.beta)));
        }
        if self.order != 1 && self.order != 3 {
            return Err(bad("step.order", format!("must be 1 or 3, got {}", self.order)));
        }
        if self.record_every == 0 {
            return Err(bad("run.record_every", "must be at least 1"));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad("run.t_end", format!("must be positive, got {t}")));
            }
        }
        if self.t_samples == 0 {
            return Err(bad("check.t_samples", "must be at least 1"));
        }
        if self.kind == Kind::Table && self.table.is_none() {
            return Err(bad("scenario.path", "required for the table scenario"));
        }
        let grid = self.grid_spec()?;
        esbgk_core::build_grid(&grid).map_err(CliError::from)?;
        self.step_config(1.0).validate().map_err(CliError::from)?;
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(bad("step.dt", format!("must be positive, got {dt}")));
            }
        }
        Ok(())
    }

    fn per_axis<T: Copy>(&self, key: &str, xs: &[T]) -> Result<Vec<T>, CliError> {
        match xs.len() {
            1 => Ok(vec![xs[0]; self.dims]),
            n if n == self.dims => Ok(xs.to_vec()),
            n => Err(bad(key, format!("expected 1 or {} entries, got {n}", self.dims))),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        if !(1..=3).contains(&self.dims) {
            return Err(bad("grid.spatial_dims", format!("must be 1, 2 or 3, got {}", self.dims)));
        }
        Ok(GridSpec {
            spatial_dims: self.dims,
            extent: self.per_axis("grid.extent", &self.length)?,
            counts: self.per_axis("grid.counts", &self.cells)?,
            v_max: self.v_max,
            nv: self.nv,
            placement: VelocityPlacement::for_count(self.nv),
        })
    }

    pub fn step_config(&self, dt: f64) -> StepConfig {
        let mut c = StepConfig::new(dt);
        c.order = if self.order == 3 { InterpOrder::Cubic } else { InterpOrder::Linear };
        c.relaxation = if self.picard {
            RelaxationMode::Picard(self.picard_k)
        } else {
            RelaxationMode::ExplicitFrozen
        };
        c.matching = self.matching;
        c.match_settings = MatchSettings {
            tol: self.match_tol,
            max_iter: self.match_max_iter,
        };
        c
    }

    pub fn scenario(&self) -> ScenarioSpec {
        let kind = match self.kind {
            Kind::Equilibrium => ScenarioKind::Equilibrium,
            Kind::DensityWave => ScenarioKind::DensityWave {
                amplitude: self.amplitude,
                wavenumber: self.wavenumber.clone(),
            },
            Kind::DensityStep => ScenarioKind::DensityStep {
                lo: self.rho_lo,
                hi: self.rho_hi,
            },
            Kind::AnisotropicHomogeneous => ScenarioKind::AnisotropicHomogeneous { sigma: Sym3(self.sigma) },
            Kind::Table => ScenarioKind::Table {
                path: self.table.clone().unwrap_or_default(),
            },
        };
        ScenarioSpec {
            kind,
            normalize: self.normalize,
        }
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model.nu", format!("{:?}", self.nu));
        kv("model.beta", format!("{:?}", self.beta));
        kv(
            "model.mode",
            match self.mode {
                ModelMode::Theorem => "theorem",
                ModelMode::Local => "local",
            }
            .into(),
        );
        kv("grid.spatial_dims", self.dims.to_string());
        kv("grid.extent", join_f(&self.length));
        kv("grid.counts", join(&self.cells));
        kv("grid.v_max", format!("{:?}", self.v_max));
        kv("grid.nv", self.nv.to_string());
        kv("step.dt", self.dt.map_or("auto".into(), |d| format!("{d:?}")));
        kv("step.order", self.order.to_string());
        kv("step.relaxation", if self.picard { "picard" } else { "explicit" }.into());
        kv("step.picard_k", self.picard_k.to_string());
        kv(
            "step.matching",
            match self.matching {
                MatchingMode::Matched => "matched",
                MatchingMode::Analytic => "analytic",
            }
            .into(),
        );
        kv("step.match_tol", format!("{:?}", self.match_tol));
        kv("step.match_max_iter", self.match_max_iter.to_string());
        kv("scenario.kind", KINDS.iter().find(|(k, _)| *k == self.kind).unwrap().1.into());
        kv("scenario.amplitude", format!("{:?}", self.amplitude));
        kv("scenario.wavenumber", join(&self.wavenumber));
        kv("scenario.rho_lo", format!("{:?}", self.rho_lo));
        kv("scenario.rho_hi", format!("{:?}", self.rho_hi));
        kv("scenario.sigma", join_f(&self.sigma));
        kv(
            "scenario.path",
            self.table.as_ref().map_or(String::new(), |p| p.display().to_string()),
        );
        kv("scenario.normalize", self.normalize.to_string());
        kv("run.n_steps", self.n_steps.to_string());
        kv("run.t_end", self.t_end.map_or("none".into(), |t| format!("{t:?}")));
        kv("run.record_every", self.record_every.to_string());
        kv("run.snapshot_every", self.snapshot_every.to_string());
        kv("output.dir", self.output.display().to_string());
        kv("check.c0", format!("{:?}", self.c0));
        kv("check.eps0", format!("{:?}", self.eps0));
        kv("check.t_samples", self.t_samples.to_string());
        kv("calibration.samples", self.calibration_samples.to_string());
        kv("calibration.seed", self.seed.to_string());
        kv("verify.samples", self.verify_samples.to_string());
        s
    }
}
