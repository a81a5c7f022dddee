//! Initial data and analytic free-streaming oracles.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use crate::diagnostics::FreeStream;
use crate::error::{EsbgkError, Result};
use crate::field::DistributionField;
use crate::gaussian::{self, GaussianParams, MatchSettings};
use crate::grid::PhaseGrid;
use crate::linalg::{Sym3, Vec3, SYM_PAIRS};
use crate::quadrature;
use crate::snapshot;

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioKind {
    /// `F₀ = μ`
    Equilibrium,
    /// `ρ₀(x) = 1 + a cos(Σ 2π k_i x_i / L_i)`, times `μ`.
    DensityWave { amplitude: f64, wavenumber: Vec<i64> },
    /// `ρ₀ = lo` on the first half of axis 0 and `hi` on the second, times `μ`.
    DensityStep { lo: f64, hi: f64 },
    /// Spatially uniform Gaussian with zero mean velocity and covariance `sigma`.
    AnisotropicHomogeneous { sigma: Sym3 },
    /// Values read from a snapshot file.
    Table { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Rescale so the discrete mass, momentum and energy equal those of `μ`.
    pub normalize: bool,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec { kind, normalize: true }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::Equilibrium => "equilibrium",
            ScenarioKind::DensityWave { .. } => "density_wave",
            ScenarioKind::DensityStep { .. } => "density_step",
            ScenarioKind::AnisotropicHomogeneous { .. } => "anisotropic_homogeneous",
            ScenarioKind::Table { .. } => "table",
        }
    }

    pub fn validate(&self, grid: &PhaseGrid) -> Result<()> {
        match &self.kind {
            ScenarioKind::DensityWave { amplitude, wavenumber } => {
                if !(0.0..1.0).contains(amplitude) {
                    return Err(EsbgkError::config(
                        "scenario.amplitude",
                        format!("must lie in [0, 1), got {amplitude}"),
                    ));
                }
                if wavenumber.len() > grid.spatial_dims() {
                    return Err(EsbgkError::config(
                        "scenario.wavenumber",
                        format!("{} entries for {} spatial axes", wavenumber.len(), grid.spatial_dims()),
                    ));
                }
            }
            ScenarioKind::DensityStep { lo, hi } => {
                for (name, x) in [("scenario.rho_lo", lo), ("scenario.rho_hi", hi)] {
                    if !(*x > 0.0 && x.is_finite()) {
                        return Err(EsbgkError::config(name, format!("must be positive and finite, got {x}")));
                    }
                }
            }
            ScenarioKind::AnisotropicHomogeneous { sigma } => {
                if !sigma.is_finite() || sigma.cholesky().is_none() {
                    return Err(EsbgkError::config("scenario.sigma", "must be symmetric positive definite"));
                }
            }
            ScenarioKind::Equilibrium | ScenarioKind::Table { .. } => {}
        }
        Ok(())
    }
}

/// The default suite: equilibrium, three density waves, a density step and
/// an anisotropic homogeneous state.
pub fn standard_suite() -> Vec<ScenarioSpec> {
    let mut suite = vec![ScenarioSpec::new(ScenarioKind::Equilibrium)];
    for a in [0.125, 0.25, 0.5] {
        suite.push(ScenarioSpec::new(ScenarioKind::DensityWave {
            amplitude: a,
            wavenumber: vec![1],
        }));
    }
    suite.push(ScenarioSpec::new(ScenarioKind::DensityStep { lo: 0.5, hi: 1.5 }));
    suite.push(ScenarioSpec::new(ScenarioKind::AnisotropicHomogeneous {
        sigma: Sym3::diag(2.0, 0.5, 0.5),
    }));
    suite
}

type Density = Box<dyn Fn(Vec3) -> f64 + Send + Sync>;

/// Unnormalized `ρ₀` of the separable kinds.
fn raw_density(kind: &ScenarioKind, grid: &PhaseGrid) -> Option<Density> {
    let extent: Vec<f64> = grid.extent().to_vec();
    match kind {
        ScenarioKind::Equilibrium => Some(Box::new(|_| 1.0)),
        ScenarioKind::DensityWave { amplitude, wavenumber } => {
            let a = *amplitude;
            let kappa: Vec<f64> = wavenumber
                .iter()
                .zip(&extent)
                .map(|(&k, &l)| 2.0 * PI * k as f64 / l)
                .collect();
            Some(Box::new(move |x| {
                let phase: f64 = kappa.iter().zip(x).map(|(k, x)| k * x).sum();
                1.0 + a * phase.cos()
            }))
        }
        ScenarioKind::DensityStep { lo, hi } => {
            let (lo, hi, l) = (*lo, *hi, extent[0]);
            Some(Box::new(move |x| if x[0].rem_euclid(l) < 0.5 * l { lo } else { hi }))
        }
        _ => None,
    }
}

/// Discrete mean of `ρ₀` over the cell positions.
fn cell_mean(grid: &PhaseGrid, rho: &Density) -> f64 {
    let vals: Vec<f64> = (0..grid.n_cells()).map(|c| rho(grid.cell_position(c))).collect();
    crate::par::det_sum(&vals) / grid.n_cells() as f64
}

/// `ρ₀` as used by [`build_initial`], including normalization; `None` for
/// kinds that are not of the form `ρ₀(x) μ(v)`.
pub fn initial_density(spec: &ScenarioSpec, grid: &PhaseGrid) -> Option<Density> {
    let rho = raw_density(&spec.kind, grid)?;
    if !spec.normalize {
        return Some(rho);
    }
    let mean = cell_mean(grid, &rho);
    Some(Box::new(move |x| rho(x) / mean))
}

pub fn build_initial(spec: &ScenarioSpec, grid: Arc<PhaseGrid>) -> Result<DistributionField> {
    spec.validate(&grid)?;
    let mu = gaussian::maxwellian_profile(&grid);
    if let Some(rho) = initial_density(spec, &grid) {
        let nvel = grid.n_vel();
        let mut values = vec![0.0; grid.len()];
        for (c, out) in values.chunks_mut(nvel).enumerate() {
            let r = rho(grid.cell_position(c));
            for (o, m) in out.iter_mut().zip(&mu) {
                *o = r * m;
            }
        }
        return DistributionField::new(grid, values, 0.0);
    }
    match &spec.kind {
        ScenarioKind::AnisotropicHomogeneous { sigma } => {
            let profile = if spec.normalize {
                matched_profile(&grid, sigma, &mu)?
            } else {
                let p = GaussianParams::new(1.0, [0.0; 3], *sigma)
                    .ok_or_else(|| EsbgkError::config("scenario.sigma", "must be symmetric positive definite"))?;
                gaussian::eval_gaussian(&p, &grid).values
            };
            DistributionField::homogeneous(grid, &profile)
        }
        ScenarioKind::Table { path } => {
            let f = snapshot::read_snapshot_on(path, &grid)?;
            f.check_admissible()?;
            let time = 0.0;
            DistributionField::new(grid, f.into_values(), time)
        }
        _ => unreachable!("separable kinds handled above"),
    }
}

/// Gaussian with covariance proportional to `sigma`, matched on the grid to
/// the discrete mass, zero momentum and discrete energy of `μ`.
fn matched_profile(grid: &PhaseGrid, sigma: &Sym3, mu: &[f64]) -> Result<Vec<f64>> {
    let m = gaussian::discrete_raw_moments(grid, mu);
    let mass = m[0];
    let energy = m[4] + m[5] + m[6];
    let scale = energy / (mass * sigma.trace());
    let mut targets = [0.0; 10];
    targets[0] = mass;
    for (p, _) in SYM_PAIRS.iter().enumerate() {
        targets[4 + p] = mass * scale * sigma.0[p];
    }
    let out = gaussian::match_discrete_moments(&targets, grid, MatchSettings::default())?;
    if !out.matched {
        return Err(EsbgkError::Degenerate(
            "could not match the anisotropic initial state on this grid".into(),
        ));
    }
    Ok(gaussian::eval_gaussian(&out, grid).values)
}

/// `F₀` in the form used by the hypothesis checker.
pub fn free_stream_mode<'a>(density: Option<&'a Density>, profile: &'a [f64]) -> FreeStream<'a> {
    match density {
        Some(d) => FreeStream::Separable {
            density: d.as_ref(),
            profile,
        },
        None => FreeStream::Grid,
    }
}

/// `∫ ρ₀(x - vt) μ(v) dv` over `ℝ³` by adaptive quadrature of the analytic
/// integrand; independent of the velocity grid (the grid only fixes the
/// periods and the normalization of `ρ₀`).
pub fn analytic_free_stream_density(spec: &ScenarioSpec, grid: &PhaseGrid, t: f64, x: Vec3) -> Result<f64> {
    let rho = initial_density(spec, grid)
        .ok_or_else(|| EsbgkError::Unsupported(format!("{} data is not of the form rho0(x) mu(v)", spec.name())))?;
    if t == 0.0 {
        return Ok(rho(x));
    }
    let gauss = |s: f64| (-0.5 * s * s).exp() / (2.0 * PI).sqrt();
    const S: f64 = 12.0;
    match &spec.kind {
        ScenarioKind::Equilibrium => Ok(rho(x)),
        ScenarioKind::DensityWave { wavenumber, .. } => {
            // ρ₀ depends on x only through the phase κ·x; project v on κ
            let kappa: Vec<f64> = wavenumber
                .iter()
                .zip(grid.extent())
                .map(|(&k, &l)| 2.0 * PI * k as f64 / l)
                .collect();
            let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(rho(x));
            }
            let dir: Vec3 = std::array::from_fn(|a| kappa.get(a).copied().unwrap_or(0.0) / norm);
            let r = quadrature::integrate(
                |s| rho([x[0] - s * t * dir[0], x[1] - s * t * dir[1], x[2] - s * t * dir[2]]) * gauss(s),
                -S,
                S,
                1e-14,
                1e-13,
                20_000,
            )?;
            Ok(r.value)
        }
        ScenarioKind::DensityStep { .. } => {
            // integrate between the jumps of s ↦ ρ₀(x₀ - s t)
            let l = grid.extent()[0];
            let half = 0.5 * l;
            let mut cuts = vec![-S, S];
            let jmin = ((x[0] - S * t) / half).floor() as i64;
            let jmax = ((x[0] + S * t) / half).ceil() as i64;
            for j in jmin..=jmax {
                let s = (x[0] - j as f64 * half) / t;
                if s > -S && s < S {
                    cuts.push(s);
                }
            }
            cuts.sort_by(f64::total_cmp);
            let mut total = 0.0;
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    total += quadrature::integrate(
                        |s| rho([x[0] - s * t, x[1], x[2]]) * gauss(s),
                        w[0],
                        w[1],
                        1e-16,
                        1e-13,
                        2_000,
                    )?
                    .value;
                }
            }
            Ok(total)
        }
        _ => unreachable!("non-separable kinds rejected above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};
    use crate::moments::compute_moments;

    fn grid(nx: usize, vmax: f64, nv: usize) -> Arc<PhaseGrid> {
        Arc::new(build_grid(&GridSpec::one_d(2.0 * PI, nx, vmax, nv)).unwrap())
    }

    #[test]
    fn density_wave_moments() {
        let g = grid(16, 8.0, 24);
        let spec = ScenarioSpec::new(ScenarioKind::DensityWave {
            amplitude: 0.5,
            wavenumber: vec![1],
        });
        let f = build_initial(&spec, g.clone()).unwrap();
        let mu = build_initial(&ScenarioSpec::new(ScenarioKind::Equilibrium), g.clone()).unwrap();
        let m = compute_moments(&f, 0.0).unwrap();
        let m_mu = compute_moments(&mu, 0.0).unwrap();
        let rho = initial_density(&spec, &g).unwrap();
        for (c, s) in m.cells.iter().enumerate() {
            let r = rho(g.cell_position(c));
            assert!((0.5 - 1e-12..=1.5 + 1e-12).contains(&r));
            assert!((s.rho - r * m_mu.cells[0].rho).abs() < 1e-13);
            assert!((s.temperature - m_mu.cells[0].temperature).abs() < 1e-12);
        }
    }

    #[test]
    fn free_stream_oracle() {
        let g = grid(16, 8.0, 24);
        let spec = ScenarioSpec::new(ScenarioKind::DensityWave {
            amplitude: 0.5,
            wavenumber: vec![1],
        });
        for &(t, x) in &[(0.3, 0.4), (1.0, 2.0), (2.5, 5.0)] {
            let got = analytic_free_stream_density(&spec, &g, t, [x, 0.0, 0.0]).unwrap();
            let want = 1.0 + 0.5 * x.cos() * (-0.5 * t * t).exp();
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        let eq = ScenarioSpec::new(ScenarioKind::Equilibrium);
        assert_eq!(analytic_free_stream_density(&eq, &g, 3.0, [1.0, 0.0, 0.0]).unwrap(), 1.0);
        let an = ScenarioSpec::new(ScenarioKind::AnisotropicHomogeneous {
            sigma: Sym3::identity(),
        });
        assert!(matches!(
            analytic_free_stream_density(&an, &g, 1.0, [0.0; 3]),
            Err(EsbgkError::Unsupported(_))
        ));
    }

    #[test]
    fn step_oracle_is_a_mixture() {
        let g = grid(16, 8.0, 24);
        let spec = ScenarioSpec::new(ScenarioKind::DensityStep { lo: 0.5, hi: 1.5 });
        // for very large t the streamed density approaches the mean
        let far = analytic_free_stream_density(&spec, &g, 200.0, [1.0, 0.0, 0.0]).unwrap();
        assert!((far - 1.0).abs() < 1e-3);
        let near = analytic_free_stream_density(&spec, &g, 1e-3, [1.0, 0.0, 0.0]).unwrap();
        assert!((near - 0.5).abs() < 1e-9);
    }

    #[test]
    fn anisotropic_state() {
        let g = grid(4, 10.0, 40);
        let sigma = Sym3::diag(2.0, 0.5, 0.5);
        let spec = ScenarioSpec {
            kind: ScenarioKind::AnisotropicHomogeneous { sigma },
            normalize: false,
        };
        let f = build_initial(&spec, g.clone()).unwrap();
        let m = compute_moments(&f, 0.0).unwrap();
        for s in &m.cells {
            assert!((s.theta - sigma).max_abs() < 1e-7, "{:?}", s.theta);
        }
        // normalized: mass and energy of the discrete Maxwellian
        let f = build_initial(&ScenarioSpec::new(spec.kind.clone()), g.clone()).unwrap();
        let mu = build_initial(&ScenarioSpec::new(ScenarioKind::Equilibrium), g).unwrap();
        let d = crate::diagnostics::conservation_defects(&f, &mu).unwrap();
        assert!(d.max_abs() < 1e-12, "{d:?}");
    }
}
