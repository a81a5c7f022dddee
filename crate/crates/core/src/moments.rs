//! Fluid moments of a distribution, the ES-BGK temperature tensor and
//! collision frequency, weighted sup norms, and the algebraic bounds that
//! relate them.

use crate::error::{EsbgkError, Result};
use crate::field::DistributionField;
use crate::grid::PhaseGrid;
use crate::linalg::{Sym3, Vec3, SYM_PAIRS};
use crate::par;

pub const RHO_FLOOR: f64 = 1e-12;
pub const T_FLOOR: f64 = 1e-12;

/// Relative slack allowed by [`sandwich_check`].
pub const SANDWICH_SLACK: f64 = 1e-10;

pub fn validate_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > -0.5 && nu < 1.0 {
        Ok(())
    } else {
        Err(EsbgkError::param("nu", format!("must lie in (-1/2, 1), got {nu}")))
    }
}

/// `(C_ν1, C_ν2) = (min, max){1 - ν, 1 + 2ν}`.
pub fn sandwich_constants(nu: f64) -> (f64, f64) {
    let a = 1.0 - nu;
    let b = 1.0 + 2.0 * nu;
    (a.min(b), a.max(b))
}

/// `(1 - ν) T Id + ν Θ`.
pub fn temperature_tensor(temperature: f64, theta: &Sym3, nu: f64) -> Sym3 {
    let iso = (1.0 - nu) * temperature;
    let t = &theta.0;
    Sym3([
        iso + nu * t[0],
        iso + nu * t[1],
        iso + nu * t[2],
        nu * t[3],
        nu * t[4],
        nu * t[5],
    ])
}

/// Macroscopic state of one spatial cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroState {
    pub rho: f64,
    pub u: Vec3,
    pub temperature: f64,
    /// Second central moment per unit density.
    pub theta: Sym3,
    pub tnu: Sym3,
    /// Collision frequency `ρ T / (1 - ν)`.
    pub anu: f64,
}

impl MacroState {
    pub fn new(rho: f64, u: Vec3, theta: Sym3, nu: f64) -> Self {
        let temperature = theta.trace() / 3.0;
        MacroState {
            rho,
            u,
            temperature,
            theta,
            tnu: temperature_tensor(temperature, &theta, nu),
            anu: rho * temperature / (1.0 - nu),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.rho >= RHO_FLOOR && self.temperature >= T_FLOOR)
    }

    /// Raw moments `(ρ, ρu, ρ(Σ + u⊗u))` of a Gaussian with covariance `sigma`.
    pub fn raw_targets(&self, sigma: &Sym3) -> [f64; 10] {
        let mut t = [0.0; 10];
        t[0] = self.rho;
        for a in 0..3 {
            t[1 + a] = self.rho * self.u[a];
        }
        for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            t[4 + p] = self.rho * (sigma.0[p] + self.u[i] * self.u[j]);
        }
        t
    }
}

/// Moments of a single velocity profile. The flag is `true` when the density
/// or the temperature falls below the floors (the cell is masked).
pub fn cell_state(grid: &PhaseGrid, f: &[f64], nu: f64) -> (MacroState, bool) {
    let dv3 = grid.dv3();
    let first = par::block_accumulate::<4, _>(f.len(), |k, acc| {
        let v = grid.velocity(k);
        let fk = f[k];
        acc[0] += fk;
        acc[1] += v[0] * fk;
        acc[2] += v[1] * fk;
        acc[3] += v[2] * fk;
    });
    let rho = dv3 * first[0];
    if !(rho >= RHO_FLOOR) || !rho.is_finite() {
        let state = MacroState::new(rho.max(0.0), [0.0; 3], Sym3::default(), nu);
        return (state, true);
    }
    let u = [
        first[1] / first[0],
        first[2] / first[0],
        first[3] / first[0],
    ];
    let second = par::block_accumulate::<6, _>(f.len(), |k, acc| {
        let v = grid.velocity(k);
        let c = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
        let fk = f[k];
        acc[0] += c[0] * c[0] * fk;
        acc[1] += c[1] * c[1] * fk;
        acc[2] += c[2] * c[2] * fk;
        acc[3] += c[0] * c[1] * fk;
        acc[4] += c[0] * c[2] * fk;
        acc[5] += c[1] * c[2] * fk;
    });
    let theta = Sym3(second.map(|s| s / first[0]));
    let state = MacroState::new(rho, u, theta, nu);
    let masked = state.is_degenerate();
    (state, masked)
}

/// Per-cell macroscopic states with the degeneracy mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField {
    pub nu: f64,
    pub cells: Vec<MacroState>,
    pub masked: Vec<bool>,
}

impl MomentField {
    pub fn n_masked(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    /// Iterator over unmasked `(cell, state)` pairs.
    pub fn active(&self) -> impl Iterator<Item = (usize, &MacroState)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(c, _)| !self.masked[*c])
    }

    /// `(min ρ, max ρ, min T, max T, max |u|)` over unmasked cells.
    pub fn bounds(&self) -> [f64; 5] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, 0.0];
        for (_, m) in self.active() {
            b[0] = b[0].min(m.rho);
            b[1] = b[1].max(m.rho);
            b[2] = b[2].min(m.temperature);
            b[3] = b[3].max(m.temperature);
            b[4] = b[4].max(crate::linalg::norm(m.u));
        }
        b
    }
}

pub fn compute_moments(f: &DistributionField, nu: f64) -> Result<MomentField> {
    validate_nu(nu)?;
    if let Some((index, &value)) = f.values().iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(EsbgkError::NonFinite { index, value });
    }
    let grid = f.grid();
    let states = par::map_collect(grid.n_cells(), |c| cell_state(grid, f.cell(c), nu));
    let (cells, masked): (Vec<_>, Vec<_>) = states.into_iter().unzip();
    if masked.iter().all(|&m| m) {
        return Err(EsbgkError::Degenerate(
            "every spatial cell is below the density/temperature floors".into(),
        ));
    }
    Ok(MomentField { nu, cells, masked })
}

/// Eigenvalue and determinant bounds of the temperature tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub det: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub det_ok: bool,
}

impl SandwichReport {
    pub fn all_ok(&self) -> bool {
        self.lower_ok && self.upper_ok && self.det_ok
    }
}

/// `C_ν1 T ≤ λ(T_ν) ≤ C_ν2 T` and `C_ν1³T³ ≤ det T_ν ≤ C_ν2³T³`, each with
/// slack `1e-10 T` (scaled by `3 T²` for the determinant).
pub fn sandwich_check(m: &MacroState, nu: f64) -> SandwichReport {
    let (c1, c2) = sandwich_constants(nu);
    let t = m.temperature;
    let tnu = Sym3::from_full(m.tnu.to_full());
    let ev = tnu.eigenvalues();
    let det = tnu.det();
    let slack = SANDWICH_SLACK * t;
    let det_slack = slack * 3.0 * (c2 * t).powi(2);
    SandwichReport {
        lambda_min: ev[0],
        lambda_max: ev[2],
        det,
        lower_ok: c1 * t - slack <= ev[0],
        upper_ok: ev[2] <= c2 * t + slack,
        det_ok: (c1 * t).powi(3) - det_slack <= det && det <= (c2 * t).powi(3) + det_slack,
    }
}

/// `(1 + |v|)^q` on every velocity node.
pub fn velocity_weights(grid: &PhaseGrid, q: f64) -> Vec<f64> {
    (0..grid.n_vel())
        .map(|k| (1.0 + crate::linalg::norm(grid.velocity(k))).powf(q))
        .collect()
}

/// `N_q(F) = max (1 + |v|)^q F(x, v)` over all phase points.
pub fn weighted_sup_norm(f: &DistributionField, q: f64) -> f64 {
    let w = velocity_weights(f.grid(), q);
    weighted_sup_norm_with(f, &w)
}

pub fn weighted_sup_norm_with(f: &DistributionField, weights: &[f64]) -> f64 {
    par::max_by_index(f.grid().n_cells(), |c| {
        f.cell(c)
            .iter()
            .zip(weights)
            .fold(f64::NEG_INFINITY, |m, (x, w)| m.max(x * w))
    })
}

/// Left-hand sides of the three velocity-weighted lower bounds and their
/// ratios to `N_0(F)` / `N_q(F)`. The constants in those bounds are not
/// explicit, so the ratios are recorded rather than asserted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundReport {
    pub q: f64,
    /// `ρ / T^{3/2}`
    pub density_over_t32: f64,
    /// `ρ (T + |u|²)^{(q-3)/2}`
    pub weighted_energy: f64,
    /// `ρ |u|^q / ((T + |u|²) T)^{3/2}`; `None` unless `q > 1`.
    pub bulk_term: Option<f64>,
    pub ratio_n0: f64,
    pub ratio_energy: f64,
    pub ratio_bulk: Option<f64>,
}

fn check_lower_bound_q(q: f64) -> Result<()> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(EsbgkError::param("q", format!("must be finite and >= 0, got {q}")));
    }
    if (3.0..=5.0).contains(&q) {
        return Err(EsbgkError::param(
            "q",
            format!("the weighted energy bound needs q < 3 or q > 5, got {q}"),
        ));
    }
    Ok(())
}

/// Ratios for a given state and precomputed norms `N_0`, `N_q`.
pub fn lower_bound_ratios(m: &MacroState, n0: f64, nq: f64, q: f64) -> Result<LowerBoundReport> {
    check_lower_bound_q(q)?;
    let t = m.temperature;
    let u2 = m.u.iter().map(|x| x * x).sum::<f64>();
    let d = m.rho / t.powf(1.5);
    let e = m.rho * (t + u2).powf((q - 3.0) / 2.0);
    let b = (q > 1.0).then(|| m.rho * u2.sqrt().powf(q) / ((t + u2) * t).powf(1.5));
    Ok(LowerBoundReport {
        q,
        density_over_t32: d,
        weighted_energy: e,
        bulk_term: b,
        ratio_n0: d / n0,
        ratio_energy: e / nq,
        ratio_bulk: b.map(|b| b / nq),
    })
}

/// Ratios for one cell state against the norms of the whole field.
pub fn lower_bound_check(m: &MacroState, f: &DistributionField, q: f64) -> Result<LowerBoundReport> {
    check_lower_bound_q(q)?;
    let n0 = weighted_sup_norm(f, 0.0);
    let nq = weighted_sup_norm(f, q);
    lower_bound_ratios(m, n0, nq, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_range() {
        assert!(validate_nu(0.0).is_ok());
        assert!(validate_nu(-0.5).is_err());
        assert!(validate_nu(1.0).is_err());
        assert!(validate_nu(f64::NAN).is_err());
    }

    #[test]
    fn sandwich_constants_at_half() {
        assert_eq!(sandwich_constants(0.5), (0.5, 2.0));
        assert_eq!(sandwich_constants(-0.25), (0.5, 1.25));
    }

    #[test]
    fn tensor_formula_direct() {
        let theta = Sym3::diag(2.0, 0.5, 0.5);
        let m = MacroState::new(1.0, [0.0; 3], theta, 0.5);
        assert_eq!(m.temperature, 1.0);
        assert_eq!(m.tnu, Sym3::diag(1.5, 0.75, 0.75));
        assert_eq!(m.anu, 2.0);
    }

    #[test]
    fn bgk_limit_is_isotropic() {
        let theta = Sym3([1.3, 0.4, 2.2, 0.3, -0.2, 0.1]);
        let m = MacroState::new(1.7, [0.1, 0.0, 0.0], theta, 0.0);
        let diff = m.tnu - Sym3::scaled_identity(m.temperature);
        assert!(diff.max_abs() <= 1e-14 * m.temperature);
        let r = sandwich_check(&m, 0.0);
        assert_eq!(r.lambda_min, m.temperature);
        assert_eq!(r.lambda_max, m.temperature);
        assert!(r.all_ok());
    }

    #[test]
    fn sandwich_at_equilibrium() {
        let m = MacroState::new(1.0, [0.0; 3], Sym3::identity(), 0.5);
        let r = sandwich_check(&m, 0.5);
        assert!(r.all_ok());
        assert!((r.lambda_min - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_exponent_band_is_rejected() {
        let m = MacroState::new(1.0, [0.0; 3], Sym3::identity(), 0.0);
        assert!(lower_bound_ratios(&m, 1.0, 1.0, 4.0).is_err());
        assert!(lower_bound_ratios(&m, 1.0, 1.0, 3.0).is_err());
        assert!(lower_bound_ratios(&m, 1.0, 1.0, 6.0).is_ok());
    }

    #[test]
    fn lower_bound_bulk_term_vanishes_without_flow() {
        let m = MacroState::new(1.0, [0.0; 3], Sym3::identity(), 0.0);
        let r = lower_bound_ratios(&m, 1.0, 1.0, 8.0).unwrap();
        assert_eq!(r.bulk_term, Some(0.0));
        assert!(lower_bound_ratios(&m, 1.0, 1.0, 0.5).unwrap().bulk_term.is_none());
    }
}
