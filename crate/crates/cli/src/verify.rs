//! Self-checks run by `esbgk verify`. Each check returns a one-line detail
//! on success; the first failure stops the command.

use std::sync::Arc;

use esbgk_core::diagnostics::{c_beta, conservation_defects, Monitor};
use esbgk_core::gaussian::{discrete_raw_moments, eval_gaussian, match_discrete_moments, GaussianParams, MatchSettings};
use esbgk_core::linalg::Sym3;
use esbgk_core::moments::{sandwich_check, MacroState};
use esbgk_core::par::{with_exec, Exec};
use esbgk_core::scenarios::{build_initial, standard_suite};
use esbgk_core::{DistributionField, PhaseGrid, Solver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{grid_of, initial_field, resolve_steps};
use crate::config::RunConfig;
use crate::error::CliError;

pub type Check = (&'static str, Result<String, String>);

type Named<'a> = (&'static str, Box<dyn Fn() -> Result<String, String> + 'a>);

pub const SANDWICH_NUS: [f64; 5] = [-0.49, -0.4, 0.0, 0.5, 0.9];

/// Random trace-normalized positive semidefinite matrix `A Aᵀ / tr`.
pub fn random_theta(rng: &mut ChaCha8Rng) -> Sym3 {
    let a: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
    let mut full = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            full[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum();
        }
    }
    let tr = full[0][0] + full[1][1] + full[2][2];
    Sym3::from_full(full.map(|row| row.map(|x| 3.0 * x / tr)))
}

pub fn sandwich(samples: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &nu in &SANDWICH_NUS {
        for i in 0..samples {
            let m = MacroState::new(1.0, [0.0; 3], random_theta(&mut rng), nu);
            let r = sandwich_check(&m, nu);
            if !r.all_ok() {
                return Err(format!("nu = {nu}, sample {i}: {r:?}"));
            }
        }
    }
    Ok(format!("{} states x {} nu", samples, SANDWICH_NUS.len()))
}

/// Matched Gaussians reproduce their targets on the configured grid.
pub fn matching(grid: &PhaseGrid, samples: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut worst: f64 = 0.0;
    let scale = (grid.v_max() / 6.0).powi(2).min(1.0);
    for i in 0..samples {
        let rho = rng.random_range(0.5..2.0);
        let u = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        let theta = random_theta(&mut rng);
        let sigma = Sym3(std::array::from_fn(|p| scale * (0.5 * theta.0[p] + if p < 3 { 0.5 } else { 0.0 })));
        let p = GaussianParams::new(rho, u, sigma).ok_or("sample is not positive definite")?;
        let targets = discrete_raw_moments(grid, &eval_gaussian(&p, grid).values);
        let fit = match_discrete_moments(&targets, grid, MatchSettings::default()).map_err(|e| e.to_string())?;
        if !fit.matched {
            return Err(format!("sample {i}: residual {:.3e} after {} iterations", fit.residual, fit.iterations));
        }
        worst = worst.max(fit.residual);
    }
    Ok(format!("worst residual {worst:.3e}"))
}

/// Entropy monotone and conservation within tolerance on every standard
/// scenario over a few steps.
pub fn suite(cfg: &RunConfig, steps: usize) -> Result<String, String> {
    let grid = grid_of(cfg).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for spec in standard_suite() {
        let f0 = build_initial(&spec, Arc::clone(&grid)).map_err(|e| e.to_string())?;
        let (dt, _) = resolve_steps(cfg, &f0).map_err(|e| e.to_string())?;
        let mut solver = Solver::new(Arc::clone(&grid), cfg.nu, cfg.step_config(dt)).map_err(|e| e.to_string())?;
        let mut monitor = Monitor::new(&f0, cfg.nu, cfg.beta).map_err(|e| e.to_string())?;
        let mut flags = Default::default();
        let mut f = f0;
        for step in 1..=steps {
            f = solver.step(&f).map_err(|e| e.to_string())?.0;
            let r = monitor.record(step, &f, &mut flags).map_err(|e| e.to_string())?;
            worst = worst.max(r.defects.max_abs());
            if r.defects.max_abs() > 1e-10 {
                return Err(format!("{}: defect {:.3e} at step {step}", spec.name(), r.defects.max_abs()));
            }
            if r.flags.entropy_up > 0 {
                return Err(format!("{}: entropy increased at step {step}", spec.name()));
            }
            if r.prop24 > r.e_func + 1e-9 * r.e_func.abs().max(1.0) {
                return Err(format!("{}: prop24 {:.6e} above E_func {:.6e}", spec.name(), r.prop24, r.e_func));
            }
        }
    }
    Ok(format!("worst defect {worst:.3e}"))
}

/// Local Maxwellians with random density, drift and temperature, times a
/// random factor in `[1/2, 3/2)` at every node.
fn random_field(grid: &Arc<PhaseGrid>, rng: &mut ChaCha8Rng) -> DistributionField {
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.n_cells() {
        let rho = rng.random_range(0.5..1.5);
        let u = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
        let p = GaussianParams::new(rho, u, Sym3::scaled_identity(rng.random_range(0.7..1.3)))
            .expect("isotropic covariance");
        values.extend(eval_gaussian(&p, grid).values.into_iter().map(|x| x * rng.random_range(0.5..1.5)));
    }
    DistributionField::new(Arc::clone(grid), values, 0.0).expect("nonnegative finite values")
}

/// One step from random nonnegative states stays nonnegative and conserves.
pub fn random_steps(cfg: &RunConfig, samples: usize, seed: u64) -> Result<String, String> {
    let grid = grid_of(cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let f0 = random_field(&grid, &mut rng);
        let (dt, _) = resolve_steps(cfg, &f0).map_err(|e| e.to_string())?;
        let mut solver = Solver::new(Arc::clone(&grid), cfg.nu, cfg.step_config(dt)).map_err(|e| e.to_string())?;
        let f1 = solver.step(&f0).map_err(|e| e.to_string())?.0;
        if let Some(x) = f1.values().iter().find(|x| x.is_nan() || **x < 0.0) {
            return Err(format!("sample {i}: value {x} after one step"));
        }
        let d = conservation_defects(&f1, &f0).map_err(|e| e.to_string())?.max_abs();
        if d > 1e-10 {
            return Err(format!("sample {i}: defect {d:.3e}"));
        }
        worst = worst.max(d);
    }
    Ok(format!("worst defect {worst:.3e}"))
}

/// `4π / (3(1-ν)) · 4! (β-6)! / (β-1)!` for integer `β ≥ 7`.
pub fn c_beta_factorial(nu: f64, beta: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    4.0 * std::f64::consts::PI / (3.0 * (1.0 - nu)) * fact(4) * fact(beta - 6) / fact(beta - 1)
}

pub fn c_beta_closed_form() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for &nu in &SANDWICH_NUS {
        for beta in 7..=14 {
            let got = c_beta(nu, f64::from(beta)).map_err(|e| e.to_string())?;
            let want = c_beta_factorial(nu, beta);
            let rel = (got / want - 1.0).abs();
            if rel > 1e-10 {
                return Err(format!("nu = {nu}, beta = {beta}: {got:.16e} vs {want:.16e}"));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!("worst relative error {worst:.3e}"))
}

/// A few steps with the sequential and the parallel policy give the same bits.
pub fn determinism(cfg: &RunConfig, steps: usize) -> Result<String, String> {
    let f0 = initial_field(cfg).map_err(|e| e.to_string())?;
    let (dt, _) = resolve_steps(cfg, &f0).map_err(|e| e.to_string())?;
    let go = |exec| {
        with_exec(exec, || -> Result<DistributionField, String> {
            let mut solver =
                Solver::new(Arc::clone(f0.grid_arc()), cfg.nu, cfg.step_config(dt)).map_err(|e| e.to_string())?;
            let mut f = f0.clone();
            for _ in 0..steps {
                f = solver.step(&f).map_err(|e| e.to_string())?.0;
            }
            Ok(f)
        })
    };
    let a = go(Exec::Sequential)?;
    let b = go(Exec::Parallel)?;
    let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
    if same {
        Ok(format!("{steps} steps bitwise equal"))
    } else {
        Err("sequential and parallel fields differ".into())
    }
}

/// Runs every check in order and stops at the first failure.
pub fn run_all(cfg: &RunConfig, mut report: impl FnMut(&Check)) -> Result<usize, CliError> {
    let n = cfg.verify_samples.max(1);
    let grid = grid_of(cfg)?;
    let checks: Vec<Named> = vec![
        ("sandwich", Box::new(|| sandwich(n * 64, cfg.seed))),
        ("c_beta", Box::new(c_beta_closed_form)),
        ("matching", Box::new(|| matching(&grid, n, cfg.seed))),
        ("random_steps", Box::new(|| random_steps(cfg, n.min(8), cfg.seed))),
        ("suite", Box::new(|| suite(cfg, 5))),
        ("determinism", Box::new(|| determinism(cfg, 3))),
    ];
    for (name, check) in &checks {
        let res = (*name, check());
        report(&res);
        if let Err(msg) = res.1 {
            return Err(CliError::Verify(format!("{name}: {msg}")));
        }
    }
    Ok(checks.len())
}
