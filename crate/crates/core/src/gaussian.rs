//! Anisotropic Gaussian targets of the relaxation operator.
//!
//! On a truncated velocity grid the Gaussian built from the continuum formula
//! does not reproduce the discrete moments of the distribution it was built
//! from, so relaxing toward it leaks mass, momentum and energy at the level of
//! the quadrature error. [`match_discrete_moments`] corrects the ten Gaussian
//! parameters `(ρ̃, ũ, Σ̃)` by Newton iteration until the grid moments
//! `(1, v, v⊗v)` of the Gaussian equal prescribed targets.
//!
//! The Newton Jacobian is assembled from the Gram matrix
//! `K = Σ_k G(v_k) ψ(c_k) ψ(c_k)ᵀ Δv³` of the monomial basis
//! `ψ(c) = (1, c, c⊗c)` in centred velocity `c = v - ũ`; both the raw moment
//! functionals and the parameter derivatives of `ln G` are linear in `ψ`, so
//! `J = A_φ K A_dᵀ` with two small change-of-basis matrices.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};

use crate::error::{EsbgkError, Result};
use crate::grid::PhaseGrid;
use crate::linalg::{sym_index, Lower3, Sym3, Vec3, SYM_PAIRS};
use crate::moments::MacroState;
use crate::par;

/// Gaussian values below this are flushed to zero.
pub const UNDERFLOW_CLAMP: f64 = 1e-300;

pub const DEFAULT_MATCH_TOL: f64 = 1e-12;
pub const DEFAULT_MATCH_MAX_ITER: u32 = 50;

const MAX_HALVINGS: u32 = 30;

/// `(2π)^{-3/2}`
pub fn maxwellian_norm() -> f64 {
    (2.0 * PI).powf(-1.5)
}

/// Normalized global Maxwellian `μ(v) = (2π)^{-3/2} exp(-|v|²/2)`.
#[inline]
pub fn maxwellian(v: Vec3) -> f64 {
    maxwellian_norm() * (-0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp()
}

/// `μ` sampled on every velocity node.
pub fn maxwellian_profile(grid: &PhaseGrid) -> Vec<f64> {
    grid.velocities().iter().map(|&v| maxwellian(v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub rho: f64,
    pub u: Vec3,
    pub sigma: Sym3,
    pub chol: Lower3,
    pub matched: bool,
    /// Largest relative mismatch between the discrete moments and the targets.
    pub residual: f64,
    pub iterations: u32,
}

impl GaussianParams {
    pub fn new(rho: f64, u: Vec3, sigma: Sym3) -> Option<Self> {
        if !(rho > 0.0 && rho.is_finite()) || !u.iter().all(|x| x.is_finite()) {
            return None;
        }
        let chol = sigma.cholesky()?;
        Some(GaussianParams {
            rho,
            u,
            sigma,
            chol,
            matched: false,
            residual: f64::NAN,
            iterations: 0,
        })
    }

    /// Parameters whose continuum moments equal the raw targets
    /// `(m0, m1, m2)`.
    pub fn from_raw_moments(t: &[f64; 10]) -> Option<Self> {
        let rho = t[0];
        let u = [t[1] / rho, t[2] / rho, t[3] / rho];
        let mut s = [0.0; 6];
        for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            s[p] = t[4 + p] / rho - u[i] * u[j];
        }
        GaussianParams::new(rho, u, Sym3(s))
    }

    /// `ρ̃ / ((2π)^{3/2} det L)`
    pub fn amplitude(&self) -> f64 {
        self.rho * maxwellian_norm() / self.chol.det()
    }

    pub fn value_at(&self, v: Vec3) -> f64 {
        let z = self.chol.solve([v[0] - self.u[0], v[1] - self.u[1], v[2] - self.u[2]]);
        self.amplitude() * (-0.5 * (z[0] * z[0] + z[1] * z[1] + z[2] * z[2])).exp()
    }

    fn as_vector(&self) -> [f64; 10] {
        let s = &self.sigma.0;
        [
            self.rho, self.u[0], self.u[1], self.u[2], s[0], s[1], s[2], s[3], s[4], s[5],
        ]
    }

    fn from_vector(p: &[f64; 10]) -> Option<Self> {
        GaussianParams::new(p[0], [p[1], p[2], p[3]], Sym3([p[4], p[5], p[6], p[7], p[8], p[9]]))
    }
}

/// Continuum parameters `(ρ, u, T_ν)` of a cell state.
pub fn analytic_params(m: &MacroState, cell: usize) -> Result<GaussianParams> {
    GaussianParams::new(m.rho, m.u, m.tnu).ok_or(EsbgkError::NotPositiveDefinite { cell })
}

/// Gaussian values on the velocity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianValues {
    pub values: Vec<f64>,
    /// Nodes flushed to zero by the underflow clamp.
    pub underflows: usize,
}

pub fn eval_gaussian(p: &GaussianParams, grid: &PhaseGrid) -> GaussianValues {
    let mut values = vec![0.0; grid.n_vel()];
    let underflows = eval_into(p, grid, &mut values);
    GaussianValues { values, underflows }
}

/// Evaluates into `out`, returning the number of clamped nodes.
pub fn eval_into(p: &GaussianParams, grid: &PhaseGrid, out: &mut [f64]) -> usize {
    let amp = p.amplitude();
    let mut clamped = 0;
    for (o, &v) in out.iter_mut().zip(grid.velocities()) {
        let z = p.chol.solve([v[0] - p.u[0], v[1] - p.u[1], v[2] - p.u[2]]);
        let g = amp * (-0.5 * (z[0] * z[0] + z[1] * z[1] + z[2] * z[2])).exp();
        *o = if g < UNDERFLOW_CLAMP {
            clamped += 1;
            0.0
        } else {
            g
        };
    }
    clamped
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings {
            tol: DEFAULT_MATCH_TOL,
            max_iter: DEFAULT_MATCH_MAX_ITER,
        }
    }
}

/// Why a matching attempt returned the continuum parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchFallback {
    SingularJacobian,
    NotPositiveDefinite,
    MaxIterations,
}

/// Result of matching plus bookkeeping used by the integrator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOutcome {
    pub params: GaussianParams,
    pub fallback: Option<MatchFallback>,
    pub underflows: usize,
}

/// Raw moment scale used for the relative residual.
fn residual_scales(t: &[f64; 10]) -> [f64; 10] {
    let mass = t[0].abs();
    let energy = (t[4] + t[5] + t[6]).abs();
    let momentum = (mass * energy).sqrt();
    let mut s = [mass; 10];
    for x in &mut s[1..4] {
        *x = momentum;
    }
    for x in &mut s[4..] {
        *x = energy;
    }
    s.map(|x| if x > 0.0 { x } else { 1.0 })
}

fn residual(m: &[f64; 10], t: &[f64; 10], scales: &[f64; 10]) -> f64 {
    (0..10).fold(0.0, |r, k| r.max((m[k] - t[k]).abs() / scales[k]))
}

/// Number of unique entries of the symmetric 10×10 Gram matrix.
const GRAM: usize = 55;

#[inline]
fn gram_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * 10 - i * (i + 1) / 2 + j
}

#[inline]
fn centred_basis(v: Vec3, u: Vec3) -> [f64; 10] {
    let c = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
    [
        1.0,
        c[0],
        c[1],
        c[2],
        c[0] * c[0],
        c[1] * c[1],
        c[2] * c[2],
        c[0] * c[1],
        c[0] * c[2],
        c[1] * c[2],
    ]
}

/// Writes the Gaussian values into `out` and returns the centred moments
/// `Σ G ψ(c) Δv³` with the clamp count.
fn evaluate(p: &GaussianParams, grid: &PhaseGrid, out: &mut [f64]) -> ([f64; 10], usize) {
    let clamped = eval_into(p, grid, out);
    let u = p.u;
    let vel = grid.velocities();
    let out = &*out;
    let mut k = par::block_accumulate::<10, _>(out.len(), |n, acc| {
        let g = out[n];
        if g == 0.0 {
            return;
        }
        let psi = centred_basis(vel[n], u);
        for i in 0..10 {
            acc[i] += g * psi[i];
        }
    });
    let dv3 = grid.dv3();
    for x in &mut k {
        *x *= dv3;
    }
    (k, clamped)
}

/// Discrete Gram matrix `Σ G ψ ψᵀ Δv³` of values already on the grid.
fn gram(values: &[f64], u: Vec3, grid: &PhaseGrid) -> [f64; GRAM] {
    let vel = grid.velocities();
    let mut k = par::block_accumulate::<GRAM, _>(values.len(), |n, acc| {
        let g = values[n];
        if g == 0.0 {
            return;
        }
        let psi = centred_basis(vel[n], u);
        let mut idx = 0;
        for i in 0..10 {
            let gi = g * psi[i];
            for &pj in &psi[i..] {
                acc[idx] += gi * pj;
                idx += 1;
            }
        }
    });
    let dv3 = grid.dv3();
    for x in &mut k {
        *x *= dv3;
    }
    k
}

/// Raw moments `(1, v, v⊗v)` from the centred moments.
fn raw_moments(col: &[f64; 10], u: Vec3) -> [f64; 10] {
    let mut m = [0.0; 10];
    m[0] = col[0];
    for a in 0..3 {
        m[1 + a] = col[1 + a] + u[a] * col[0];
    }
    for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        m[4 + p] = col[4 + p] + u[i] * col[1 + j] + u[j] * col[1 + i] + u[i] * u[j] * col[0];
    }
    m
}

/// Rows express the raw moment functionals in the centred basis.
fn moment_basis(u: Vec3) -> SMatrix<f64, 10, 10> {
    let mut a = SMatrix::<f64, 10, 10>::zeros();
    a[(0, 0)] = 1.0;
    for i in 0..3 {
        a[(1 + i, 1 + i)] = 1.0;
        a[(1 + i, 0)] = u[i];
    }
    for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        a[(4 + p, 4 + p)] = 1.0;
        a[(4 + p, 1 + j)] += u[i];
        a[(4 + p, 1 + i)] += u[j];
        a[(4 + p, 0)] = u[i] * u[j];
    }
    a
}

/// Rows express `∂ ln G / ∂(ρ, u, Σ)` in the centred basis.
fn derivative_basis(p: &GaussianParams, prec: &Sym3) -> SMatrix<f64, 10, 10> {
    let mut a = SMatrix::<f64, 10, 10>::zeros();
    a[(0, 0)] = 1.0 / p.rho;
    // w = P c
    for i in 0..3 {
        for b in 0..3 {
            a[(1 + i, 1 + b)] = prec.get(i, b);
        }
    }
    // w_i w_j expressed on the quadratic monomials
    let wiwj = |i: usize, j: usize| -> [f64; 6] {
        let mut r = [0.0; 6];
        for (q, &(b, c)) in SYM_PAIRS.iter().enumerate() {
            r[q] = if b == c {
                prec.get(i, b) * prec.get(j, b)
            } else {
                prec.get(i, b) * prec.get(j, c) + prec.get(i, c) * prec.get(j, b)
            };
        }
        r
    };
    for (row, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let quad = wiwj(i, j);
        // diagonal entries: ½(w_i² - P_ii); off-diagonal: w_i w_j - P_ij
        let f = if i == j { 0.5 } else { 1.0 };
        for q in 0..6 {
            a[(4 + row, 4 + q)] = f * quad[q];
        }
        a[(4 + row, 0)] = -f * prec.0[sym_index(i, j)];
    }
    a
}

fn gram_matrix(g: &[f64; GRAM]) -> SMatrix<f64, 10, 10> {
    SMatrix::<f64, 10, 10>::from_fn(|i, j| g[gram_index(i, j)])
}

/// Matches the ten raw discrete moments of a Gaussian to `targets`.
///
/// Starts from the continuum parameters of the targets. With `tol = ∞` those
/// are returned unchanged and flagged matched.
pub fn match_discrete_moments(
    targets: &[f64; 10],
    grid: &PhaseGrid,
    settings: MatchSettings,
) -> Result<GaussianParams> {
    let mut values = vec![0.0; grid.n_vel()];
    match_into(targets, grid, settings, &mut values).map(|o| o.params)
}

/// [`match_discrete_moments`] writing the final Gaussian values into `values`
/// and reporting fallbacks.
pub fn match_into(
    targets: &[f64; 10],
    grid: &PhaseGrid,
    settings: MatchSettings,
    values: &mut [f64],
) -> Result<MatchOutcome> {
    let initial = GaussianParams::from_raw_moments(targets)
        .ok_or_else(|| EsbgkError::Degenerate("match targets are not a valid Gaussian".into()))?;
    let scales = residual_scales(targets);

    let (first, clamped) = evaluate(&initial, grid, values);
    let r0 = residual(&raw_moments(&first, initial.u), targets, &scales);
    if r0 <= settings.tol || settings.tol.is_infinite() {
        let params = GaussianParams {
            matched: true,
            residual: r0,
            ..initial
        };
        return Ok(MatchOutcome {
            params,
            fallback: None,
            underflows: clamped,
        });
    }

    let fallback = |reason: MatchFallback, values: &mut [f64]| -> MatchOutcome {
        let underflows = eval_into(&initial, grid, values);
        MatchOutcome {
            params: GaussianParams {
                matched: false,
                residual: r0,
                ..initial
            },
            fallback: Some(reason),
            underflows,
        }
    };

    let mut current = initial;
    let mut first = first;
    for it in 1..=settings.max_iter {
        let m = raw_moments(&first, current.u);
        let prec = match current.sigma.inverse() {
            Some(p) => p,
            None => return Ok(fallback(MatchFallback::NotPositiveDefinite, values)),
        };
        let k = gram(values, current.u, grid);
        let jac = moment_basis(current.u) * gram_matrix(&k) * derivative_basis(&current, &prec).transpose();
        let rhs = SVector::<f64, 10>::from_fn(|k, _| targets[k] - m[k]);
        let step = match jac.lu().solve(&rhs) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s,
            _ => return Ok(fallback(MatchFallback::SingularJacobian, values)),
        };
        let base = current.as_vector();
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: [f64; 10] = std::array::from_fn(|k| base[k] + lambda * step[k]);
            if let Some(p) = GaussianParams::from_vector(&trial) {
                next = Some(p);
                break;
            }
            lambda *= 0.5;
        }
        let Some(next) = next else {
            return Ok(fallback(MatchFallback::NotPositiveDefinite, values));
        };
        let (g, clamped) = evaluate(&next, grid, values);
        let r = residual(&raw_moments(&g, next.u), targets, &scales);
        current = next;
        first = g;
        if r <= settings.tol {
            return Ok(MatchOutcome {
                params: GaussianParams {
                    matched: true,
                    residual: r,
                    iterations: it,
                    ..current
                },
                fallback: None,
                underflows: clamped,
            });
        }
    }
    Ok(fallback(MatchFallback::MaxIterations, values))
}

/// Discrete raw moments `(1, v, v⊗v)` of arbitrary values on the grid.
pub fn discrete_raw_moments(grid: &PhaseGrid, values: &[f64]) -> [f64; 10] {
    let vel = grid.velocities();
    let s = par::block_accumulate::<10, _>(values.len(), |n, acc| {
        let f = values[n];
        let v = vel[n];
        acc[0] += f;
        acc[1] += v[0] * f;
        acc[2] += v[1] * f;
        acc[3] += v[2] * f;
        for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            acc[4 + p] += v[i] * v[j] * f;
        }
    });
    let dv3 = grid.dv3();
    s.map(|x| x * dv3)
}
