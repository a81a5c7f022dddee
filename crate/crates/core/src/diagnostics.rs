//! Functionals and bounds evaluated along a run: conservation defects,
//! entropies, the weighted sup norm, the macroscopic deviation from `μ`,
//! the local doubling horizon and the hypothesis quantities for initial data.
//!
//! Every integral is a phase-space quadrature with weight `Δv³ Π Δx_i`,
//! reduced per cell and then over cells in a fixed order.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EsbgkError, Result};
use crate::field::DistributionField;
use crate::gaussian::{self, GaussianParams};
use crate::grid::{InterpOrder, PhaseGrid};
use crate::integrator::{self, StepReport};
use crate::linalg::{Sym3, Vec3};
use crate::moments::{self, cell_state, sandwich_check};
use crate::par;
use crate::quadrature;

/// Values below this are treated as zero in logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Totals below this are reported as absolute rather than relative defects.
pub const DEFECT_ABS_THRESHOLD: f64 = 1e-14;

/// Relative per-record tolerance before an entropy increase is flagged.
pub const ENTROPY_TOL: f64 = 1e-8;

/// Relative mass mismatch above which the Csiszár–Kullback check is skipped.
pub const CK_MASS_TOL: f64 = 1e-10;

/// Values of `macro_dev` at or below this are ignored by [`fit_decay_rate`].
pub const DECAY_FLOOR: f64 = 1e-10;

/// `3/2 ln(2π) - 1`
pub fn mass_coefficient() -> f64 {
    1.5 * (2.0 * PI).ln() - 1.0
}

/// `ln μ(v)`
#[inline]
fn ln_maxwellian(v: Vec3) -> f64 {
    -1.5 * (2.0 * PI).ln() - 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Discrete totals of `(1, v, |v|²)` over phase space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Totals {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

/// Drift of the totals against a reference, relative where the reference
/// total is at least [`DEFECT_ABS_THRESHOLD`] in magnitude. Momentum is
/// measured against `√(M E)`, which bounds `|J|` and stays meaningful when the
/// reference momentum is only roundoff.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Defects {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

impl Defects {
    pub fn max_abs(&self) -> f64 {
        self.momentum
            .iter()
            .fold(self.mass.abs().max(self.energy.abs()), |m, x| m.max(x.abs()))
    }
}

fn drift(now: f64, then: f64) -> f64 {
    if then.abs() < DEFECT_ABS_THRESHOLD {
        now - then
    } else {
        (now - then) / then.abs()
    }
}

impl Totals {
    pub fn defects_from(&self, reference: &Totals) -> Defects {
        Defects {
            mass: drift(self.mass, reference.mass),
            momentum: std::array::from_fn(|a| {
                let scale = (reference.mass * reference.energy).max(0.0).sqrt();
                let d = self.momentum[a] - reference.momentum[a];
                if scale < DEFECT_ABS_THRESHOLD {
                    d
                } else {
                    d / scale
                }
            }),
            energy: drift(self.energy, reference.energy),
        }
    }
}

// Slots of the per-cell accumulator.
const S_MASS: usize = 0;
const S_MOM: usize = 1;
const S_ENERGY: usize = 4;
const S_H: usize = 5;
const S_HREL: usize = 6;
const S_PROP24: usize = 7;
const S_L1: usize = 8;
const S_SECOND: usize = 9;
const SLOTS: usize = 15;

/// Number of components of the macroscopic deviation: mass, three momenta,
/// energy and the six stress entries.
pub const MACRO_COMPONENTS: usize = 11;

const MACRO_SLOTS: [usize; MACRO_COMPONENTS] = [
    S_MASS,
    S_MOM,
    S_MOM + 1,
    S_MOM + 2,
    S_ENERGY,
    S_SECOND,
    S_SECOND + 1,
    S_SECOND + 2,
    S_SECOND + 3,
    S_SECOND + 4,
    S_SECOND + 5,
];

/// `μ`, `ln μ` and the per-cell sums of `μ` on a velocity grid.
#[derive(Clone, Debug)]
struct Reference {
    mu: Vec<f64>,
    ln_mu: Vec<f64>,
    mu_cell: [f64; SLOTS],
}

impl Reference {
    fn new(grid: &PhaseGrid) -> Self {
        let mu = gaussian::maxwellian_profile(grid);
        let ln_mu = grid.velocities().iter().map(|&v| ln_maxwellian(v)).collect();
        let mut r = Reference {
            mu,
            ln_mu,
            mu_cell: [0.0; SLOTS],
        };
        let mu = r.mu.clone();
        r.mu_cell = r.cell_sums(grid, &mu);
        r
    }

    /// Unscaled velocity sums of one cell profile.
    fn cell_sums(&self, grid: &PhaseGrid, f: &[f64]) -> [f64; SLOTS] {
        let vel = grid.velocities();
        par::block_accumulate::<SLOTS, _>(f.len(), |k, acc| {
            let fk = f[k];
            let mu = self.mu[k];
            let v = vel[k];
            acc[S_MASS] += fk;
            acc[S_MOM] += v[0] * fk;
            acc[S_MOM + 1] += v[1] * fk;
            acc[S_MOM + 2] += v[2] * fk;
            acc[S_ENERGY] += (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * fk;
            let mu_ln_mu = mu * self.ln_mu[k];
            if fk > LOG_FLOOR {
                let ln_f = fk.ln();
                acc[S_H] += fk * ln_f - mu_ln_mu;
                acc[S_HREL] += fk * (ln_f - self.ln_mu[k]) - fk + mu;
            } else {
                acc[S_H] -= mu_ln_mu;
                acc[S_HREL] += mu - fk;
            }
            let d = (fk - mu).abs();
            acc[S_PROP24] += if d <= mu { d * d / (4.0 * mu) } else { 0.25 * d };
            acc[S_L1] += d;
            acc[S_SECOND] += v[0] * v[0] * fk;
            acc[S_SECOND + 1] += v[1] * v[1] * fk;
            acc[S_SECOND + 2] += v[2] * v[2] * fk;
            acc[S_SECOND + 3] += v[0] * v[1] * fk;
            acc[S_SECOND + 4] += v[0] * v[2] * fk;
            acc[S_SECOND + 5] += v[1] * v[2] * fk;
        })
    }
}

/// One fused pass over a field.
#[derive(Clone, Copy, Debug)]
struct Pass {
    totals: Totals,
    mu_totals: Totals,
    h: f64,
    h_rel: f64,
    prop24: f64,
    l1: f64,
    components: [f64; MACRO_COMPONENTS],
}

fn field_pass(f: &DistributionField, r: &Reference) -> Result<Pass> {
    f.check_admissible()?;
    let grid = f.grid();
    let dv3 = grid.dv3();
    let per_cell = par::map_collect(grid.n_cells(), |c| r.cell_sums(grid, f.cell(c)));
    let total = par::tree_merge(&per_cell);
    let mut components = [0.0f64; MACRO_COMPONENTS];
    for cell in &per_cell {
        for (comp, &slot) in components.iter_mut().zip(&MACRO_SLOTS) {
            *comp = comp.max(((cell[slot] - r.mu_cell[slot]) * dv3).abs());
        }
    }
    let w = dv3 * grid.cell_volume();
    let n = grid.n_cells() as f64;
    let totals = Totals {
        mass: w * total[S_MASS],
        momentum: [w * total[S_MOM], w * total[S_MOM + 1], w * total[S_MOM + 2]],
        energy: w * total[S_ENERGY],
    };
    let mu_totals = Totals {
        mass: w * n * r.mu_cell[S_MASS],
        momentum: [
            w * n * r.mu_cell[S_MOM],
            w * n * r.mu_cell[S_MOM + 1],
            w * n * r.mu_cell[S_MOM + 2],
        ],
        energy: w * n * r.mu_cell[S_ENERGY],
    };
    Ok(Pass {
        totals,
        mu_totals,
        h: w * total[S_H],
        h_rel: w * total[S_HREL],
        prop24: w * total[S_PROP24],
        l1: w * total[S_L1],
        components,
    })
}

impl Pass {
    /// `ℰ(F) = H(F) + (3/2 ln 2π - 1) M₀ + ½ E₀` with the defects of `defects_of`.
    fn e_func(&self, defects_of: &Pass) -> f64 {
        let m0 = defects_of.totals.mass - defects_of.mu_totals.mass;
        let e0 = defects_of.totals.energy - defects_of.mu_totals.energy;
        self.h + mass_coefficient() * m0 + 0.5 * e0
    }

    fn ck_gap(&self) -> f64 {
        let m = self.mu_totals.mass;
        if (self.totals.mass - m).abs() > CK_MASS_TOL * m {
            return f64::NAN;
        }
        (2.0 * m * self.h_rel.max(0.0)).sqrt() - self.l1
    }
}

pub fn totals(f: &DistributionField) -> Result<Totals> {
    Ok(field_pass(f, &Reference::new(f.grid()))?.totals)
}

pub fn conservation_defects(f: &DistributionField, f0: &DistributionField) -> Result<Defects> {
    f.same_grid(f0)?;
    let r = Reference::new(f.grid());
    let now = field_pass(f, &r)?.totals;
    let then = field_pass(f0, &r)?.totals;
    Ok(now.defects_from(&then))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyReport {
    /// `∫∫ F ln F - μ ln μ`
    pub h: f64,
    /// `∫∫ F ln(F/μ) - F + μ`; equals `∫∫ F ln(F/μ)` when the masses agree.
    pub h_rel: f64,
    pub prop24: f64,
    /// `H(F) + (3/2 ln 2π - 1) M₀ + ½ E₀` with the defects of the reference
    /// initial state.
    pub e_func: f64,
}

/// Entropy functionals of `f`, with the mass and energy defects taken from
/// `f0` (pass `f` itself for `ℰ(F)`).
pub fn entropy_functionals(f: &DistributionField, f0: &DistributionField) -> Result<EntropyReport> {
    f.same_grid(f0)?;
    let r = Reference::new(f.grid());
    let p = field_pass(f, &r)?;
    let p0 = field_pass(f0, &r)?;
    Ok(EntropyReport {
        h: p.h,
        h_rel: p.h_rel,
        prop24: p.prop24,
        e_func: p.e_func(&p0),
    })
}

/// `sup_x |∫ (1, v, |v|², v⊗v)(F - μ) dv|` with the per-component maxima in
/// the order mass, momentum, energy, stress `[xx, yy, zz, xy, xz, yz]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroDeviation {
    pub max: f64,
    pub components: [f64; MACRO_COMPONENTS],
}

pub fn macro_deviation(f: &DistributionField) -> Result<MacroDeviation> {
    let p = field_pass(f, &Reference::new(f.grid()))?;
    Ok(MacroDeviation {
        max: p.components.iter().cloned().fold(0.0, f64::max),
        components: p.components,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CkCheck {
    /// `√(2 m H(F|μ)) - ‖F - μ‖₁`, where `m` is the discrete mass of `μ`;
    /// `None` when the masses of `F` and `μ` differ.
    pub gap: Option<f64>,
    pub l1: f64,
    pub h_rel: f64,
    pub mass_mismatch: f64,
}

pub fn ck_check(f: &DistributionField) -> Result<CkCheck> {
    let p = field_pass(f, &Reference::new(f.grid()))?;
    let gap = p.ck_gap();
    Ok(CkCheck {
        gap: (!gap.is_nan()).then_some(gap),
        l1: p.l1,
        h_rel: p.h_rel,
        mass_mismatch: (p.totals.mass - p.mu_totals.mass) / p.mu_totals.mass,
    })
}

/// Event counters accumulated between two records.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiagnosticFlags {
    pub masked: usize,
    pub held: usize,
    pub fallbacks: usize,
    pub underflows: usize,
    pub clipped_points: usize,
    pub clipped_mass: f64,
    pub entropy_up: usize,
    /// Cells violating the temperature tensor bounds at the record.
    pub sandwich: usize,
}

impl DiagnosticFlags {
    pub fn absorb_step(&mut self, r: &StepReport) {
        self.masked += r.relax.masked;
        self.held += r.relax.held;
        self.fallbacks += r.relax.fallbacks;
        self.underflows += r.relax.underflows;
        self.clipped_points += r.transport.clipped_points;
        self.clipped_mass += r.transport.clipped_mass;
    }

    pub fn any(&self) -> bool {
        self.masked + self.held + self.fallbacks + self.entropy_up + self.sandwich + self.clipped_points > 0
    }

    /// Compact comma-free form used in the series file.
    pub fn token(&self) -> String {
        format!(
            "masked:{};held:{};fallback:{};underflow:{};clipped:{};entropy_up:{};sandwich:{}",
            self.masked,
            self.held,
            self.fallbacks,
            self.underflows,
            self.clipped_points,
            self.entropy_up,
            self.sandwich
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub defects: Defects,
    pub h: f64,
    pub h_rel: f64,
    pub prop24: f64,
    pub e_func: f64,
    pub n_beta: f64,
    pub macro_dev: f64,
    pub macro_components: [f64; MACRO_COMPONENTS],
    /// `(min ρ, max ρ, min T, max T, max |u|)` over unmasked cells.
    pub bounds: [f64; 5],
    /// NaN when the mass of `F` differs from that of `μ`.
    pub ck_gap: f64,
    pub flags: DiagnosticFlags,
}

/// Produces [`DiagnosticsRecord`]s relative to a fixed initial state.
#[derive(Clone, Debug)]
pub struct Monitor {
    nu: f64,
    beta: f64,
    weights: Vec<f64>,
    reference: Reference,
    initial: Pass,
    /// Roundoff floor for the entropy increase test.
    entropy_floor: f64,
    last_h: Option<f64>,
}

impl Monitor {
    pub fn new(f0: &DistributionField, nu: f64, beta: f64) -> Result<Self> {
        moments::validate_nu(nu)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(EsbgkError::param("beta", format!("must be finite and >= 0, got {beta}")));
        }
        let grid = f0.grid();
        let reference = Reference::new(grid);
        let initial = field_pass(f0, &reference)?;
        let mu_abs_ln: f64 = reference
            .mu
            .iter()
            .zip(&reference.ln_mu)
            .map(|(m, l)| (m * l).abs())
            .sum();
        let entropy_floor = 1e-13 * mu_abs_ln * grid.dv3() * grid.volume();
        Ok(Monitor {
            nu,
            beta,
            weights: moments::velocity_weights(grid, beta),
            reference,
            initial,
            entropy_floor,
            last_h: None,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ℰ(F₀)`
    pub fn initial_e_func(&self) -> f64 {
        self.initial.e_func(&self.initial)
    }

    pub fn initial_totals(&self) -> Totals {
        self.initial.totals
    }

    /// Evaluates every functional of `f`. `flags` supplies the counters since
    /// the previous record; the entropy and tensor-bound checks are added.
    pub fn record(&mut self, step: usize, f: &DistributionField, flags: &mut DiagnosticFlags) -> Result<DiagnosticsRecord> {
        let p = field_pass(f, &self.reference)?;
        let m = moments::compute_moments(f, self.nu)?;
        flags.sandwich += m.active().filter(|(_, s)| !sandwich_check(s, self.nu).all_ok()).count();
        if let Some(prev) = self.last_h {
            if p.h > prev + ENTROPY_TOL * prev.abs() + self.entropy_floor {
                flags.entropy_up += 1;
            }
        }
        self.last_h = Some(p.h);
        Ok(DiagnosticsRecord {
            step,
            t: f.time,
            defects: p.totals.defects_from(&self.initial.totals),
            h: p.h,
            h_rel: p.h_rel,
            prop24: p.prop24,
            e_func: p.e_func(&self.initial),
            n_beta: moments::weighted_sup_norm_with(f, &self.weights),
            macro_dev: p.components.iter().cloned().fold(0.0, f64::max),
            macro_components: p.components,
            bounds: m.bounds(),
            ck_gap: p.ck_gap(),
            flags: *flags,
        })
    }
}

/// `C_β(ν) = 4π / (3 (1 - ν)) ∫₀^∞ r⁴ (1 + r)^{-β} dr`, the constant bounding
/// the collision frequency by the weighted sup norm.
pub fn c_beta(nu: f64, beta: f64) -> Result<f64> {
    moments::validate_nu(nu)?;
    if !(beta > 5.0 && beta.is_finite()) {
        return Err(EsbgkError::param("beta", format!("must be finite and > 5, got {beta}")));
    }
    // with 1 + r = e^y the integrand becomes (1 - e^{-y})⁴ e^{-(β-5) y}
    let k = beta - 5.0;
    let upper = ((1.0 / k).ln().max(0.0) + 45.0) / k;
    let r = quadrature::integrate(
        |y| {
            let s = -(-y).exp_m1();
            s.powi(4) * (-k * y).exp()
        },
        0.0,
        upper,
        0.0,
        1e-13,
        10_000,
    )?;
    Ok(4.0 * PI / (3.0 * (1.0 - nu)) * r.value)
}

/// `t₁ = (4 C_β N_β(F₀))^{-1}`
pub fn doubling_time(c_beta: f64, n_beta0: f64) -> Result<f64> {
    let t1 = 1.0 / (4.0 * c_beta * n_beta0);
    if !(t1.is_finite() && t1 > 0.0) {
        return Err(EsbgkError::Degenerate(format!(
            "doubling time not computable from C_beta = {c_beta}, N_beta = {n_beta0}"
        )));
    }
    Ok(t1)
}

/// Empirical constants from a random corpus of Gaussians and two-component
/// Gaussian mixtures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub samples: usize,
    pub seed: u64,
    /// `max N_β(M_ν[F]) / N_β(F)`
    pub wm_const: f64,
    /// Maxima of the three lower-bound ratios.
    pub ratio_n0_max: f64,
    pub ratio_energy_max: f64,
    pub ratio_bulk_max: f64,
}

fn random_gaussian(rng: &mut ChaCha8Rng) -> Option<GaussianParams> {
    let rho = rng.random_range(0.2..2.0);
    let u = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let a: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-0.8..0.8)));
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { 0.3 } else { 0.0 };
        }
    }
    GaussianParams::new(rho, u, Sym3::from_full(s))
}

/// Sample `index` of the corpus: a Gaussian or a mixture of two.
pub fn corpus_profile(grid: &PhaseGrid, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let parts = if rng.random_bool(0.5) { 1 } else { 2 };
    let mut out = vec![0.0; grid.n_vel()];
    let mut buf = vec![0.0; grid.n_vel()];
    let mut made = 0;
    while made < parts {
        if let Some(p) = random_gaussian(&mut rng) {
            gaussian::eval_into(&p, grid, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
            made += 1;
        }
    }
    out
}

pub fn calibrate(grid: &PhaseGrid, nu: f64, beta: f64, samples: usize, seed: u64) -> Result<Calibration> {
    moments::validate_nu(nu)?;
    if samples == 0 {
        return Err(EsbgkError::param("samples", "calibration corpus is empty"));
    }
    let w = moments::velocity_weights(grid, beta);
    let sup = |f: &[f64]| f.iter().zip(&w).fold(0.0f64, |m, (x, w)| m.max(x * w));
    let rows = par::map_collect(samples, |s| -> Result<[f64; 4]> {
        let f = corpus_profile(grid, seed, s as u64);
        let (m, masked) = cell_state(grid, &f, nu);
        if masked {
            return Err(EsbgkError::Degenerate(format!("corpus sample {s} is degenerate")));
        }
        let target = gaussian::eval_gaussian(&gaussian::analytic_params(&m, s)?, grid).values;
        let n0 = f.iter().cloned().fold(0.0, f64::max);
        let nb = sup(&f);
        let l = moments::lower_bound_ratios(&m, n0, nb, beta)?;
        Ok([sup(&target) / nb, l.ratio_n0, l.ratio_energy, l.ratio_bulk.unwrap_or(0.0)])
    });
    let mut max = [0.0f64; 4];
    for r in rows {
        let r = r?;
        for (m, x) in max.iter_mut().zip(r) {
            *m = m.max(x);
        }
    }
    Ok(Calibration {
        samples,
        seed,
        wm_const: max[0],
        ratio_n0_max: max[1],
        ratio_energy_max: max[2],
        ratio_bulk_max: max[3],
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants {
    pub nu: f64,
    pub beta: f64,
    pub c_beta: f64,
    pub calibration: Calibration,
}

pub fn derive_constants(nu: f64, beta: f64, grid: &PhaseGrid, samples: usize, seed: u64) -> Result<DerivedConstants> {
    Ok(DerivedConstants {
        nu,
        beta,
        c_beta: c_beta(nu, beta)?,
        calibration: calibrate(grid, nu, beta, samples, seed)?,
    })
}

/// Weighted-norm growth on `[0, t₁]` and the macroscopic band before and
/// after `t₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoublingReport {
    pub t1: f64,
    pub n_beta0: f64,
    pub max_n_beta: f64,
    pub doubling_ok: bool,
    /// `max{ρ_max, 1/ρ_min, T_max, 1/T_min, |u|_max, 1}` over `[0, t₁]`.
    pub c1: f64,
    /// Minimum density and temperature over `[0, t₁]`.
    pub rho_min: f64,
    pub t_min: f64,
    pub window_ok: bool,
    pub later_records: usize,
    pub later_violations: usize,
}

impl DoublingReport {
    pub fn later_ok(&self) -> bool {
        self.later_violations == 0
    }
}

fn band_constant(b: &[f64; 5]) -> f64 {
    [b[1], 1.0 / b[0], b[3], 1.0 / b[2], b[4], 1.0]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Needs records with times covering `[0, t₁]`.
pub fn doubling_monitor(records: &[DiagnosticsRecord], t1: f64) -> Result<DoublingReport> {
    let first = records
        .first()
        .ok_or_else(|| EsbgkError::Coverage("no records".into()))?;
    let last = records.last().unwrap();
    if last.t < t1 {
        return Err(EsbgkError::Coverage(format!(
            "records end at t = {} before t1 = {t1}",
            last.t
        )));
    }
    let (window, later): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.t <= t1);
    let n_beta0 = first.n_beta;
    let max_n_beta = window.iter().fold(0.0f64, |m, r| m.max(r.n_beta));
    let c1 = window.iter().fold(1.0f64, |m, r| m.max(band_constant(&r.bounds)));
    let rho_min = window.iter().fold(f64::INFINITY, |m, r| m.min(r.bounds[0]));
    let t_min = window.iter().fold(f64::INFINITY, |m, r| m.min(r.bounds[2]));
    let later_violations = later
        .iter()
        .filter(|r| !(band_constant(&r.bounds) <= 2.0 * c1))
        .count();
    Ok(DoublingReport {
        t1,
        n_beta0,
        max_n_beta,
        doubling_ok: max_n_beta <= 2.0 * n_beta0,
        c1,
        rho_min,
        t_min,
        window_ok: rho_min > 0.0 && t_min > 0.0 && rho_min.is_finite() && t_min.is_finite(),
        later_records: later.len(),
        later_violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    /// `λ` in `macro_dev ≈ C e^{-λ t}`.
    pub rate: f64,
    pub log_prefactor: f64,
    pub points: usize,
}

/// Least-squares fit of `ln(values)` against `times` over the samples above
/// [`DECAY_FLOOR`], skipping the first 10% of them.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > DECAY_FLOOR && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let skip = pts.len() / 10;
    let pts = &pts[skip..];
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(DecayFit {
        rate: -slope,
        log_prefactor: my - slope * mt,
        points: pts.len(),
    })
}

/// How the free-streamed initial data `F₀(x - vt, v)` is evaluated.
#[derive(Clone, Copy)]
pub enum FreeStream<'a> {
    /// Linear interpolation on the phase grid.
    Grid,
    /// `F₀(x, v) = ρ₀(x) g(v)`: `ρ₀` is evaluated exactly at the foot points.
    Separable {
        density: &'a (dyn Fn(Vec3) -> f64 + Sync),
        profile: &'a [f64],
    },
}

/// `0` followed by `n - 1` log-spaced times up to `20 (1 - ν)`.
pub fn default_t_samples(nu: f64, n: usize) -> Vec<f64> {
    let end = 20.0 * (1.0 - nu);
    let start = end * 1e-3;
    let mut t = vec![0.0];
    if n > 1 {
        let m = n - 1;
        for i in 0..m {
            let s = if m == 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
            t.push(start * (end / start).powf(s));
        }
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisSettings {
    pub nu: f64,
    pub beta: f64,
    /// Required lower bound on the streamed density.
    pub c0: f64,
    /// Smallness threshold for the ε quantity.
    pub eps0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub nu: f64,
    pub beta: f64,
    /// `min` over samples of `∫ F₀(x - vt, v) dv`.
    pub c0_inf: f64,
    pub e_func0: f64,
    /// `max_{t ≥ t₁} e^{-t/(1-ν)} macro_dev(F₀(x - vt, v))`
    pub streamed_deviation: f64,
    pub eps_quantity: f64,
    pub t1: f64,
    pub c_beta: f64,
    pub n_beta0: f64,
    pub t_samples: usize,
    pub x_samples: usize,
    pub c0_threshold: f64,
    pub eps0_threshold: f64,
    pub c0_ok: bool,
    pub eps_ok: bool,
    /// `β > 7`
    pub beta_ok: bool,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.c0_ok && self.eps_ok && self.beta_ok
    }
}

fn streamed(f0: &DistributionField, t: f64, how: FreeStream) -> Result<DistributionField> {
    match how {
        FreeStream::Grid => Ok(integrator::transport_step(f0, t, InterpOrder::Linear)?.0),
        FreeStream::Separable { density, profile } => {
            let grid = f0.grid();
            if profile.len() != grid.n_vel() {
                return Err(EsbgkError::GridMismatch("profile length differs from the velocity grid".into()));
            }
            let nvel = grid.n_vel();
            let mut values = vec![0.0; grid.len()];
            par::for_each_chunk_mut(&mut values, nvel, |c, out| {
                let x = grid.cell_position(c);
                for (k, o) in out.iter_mut().enumerate() {
                    let v = grid.velocity(k);
                    *o = density([x[0] - v[0] * t, x[1] - v[1] * t, x[2] - v[2] * t]) * profile[k];
                }
            });
            Ok(f0.with_values(values, f0.time + t))
        }
    }
}

/// Evaluates the smallness and positivity quantities of the global existence
/// result for `f0`, with all spatial cells as `x` samples. `t₁` is added to
/// the time samples.
pub fn hypothesis_check(
    f0: &DistributionField,
    how: FreeStream,
    t_samples: &[f64],
    s: HypothesisSettings,
) -> Result<HypothesisReport> {
    if t_samples.is_empty() {
        return Err(EsbgkError::param("t_samples", "no time samples"));
    }
    if let Some(&t) = t_samples.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(EsbgkError::param("t_samples", format!("times must be finite and >= 0, got {t}")));
    }
    let c_beta = c_beta(s.nu, s.beta)?;
    let n_beta0 = moments::weighted_sup_norm(f0, s.beta);
    let t1 = doubling_time(c_beta, n_beta0)?;
    let mut times = t_samples.to_vec();
    times.push(t1);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let r = Reference::new(f0.grid());
    let p0 = field_pass(f0, &r)?;
    let e_func0 = p0.e_func(&p0);
    let grid = f0.grid();
    let dv3 = grid.dv3();
    let mut c0_inf = f64::INFINITY;
    let mut dev = 0.0f64;
    for &t in &times {
        let ft = streamed(f0, t, how)?;
        let dens = par::map_collect(grid.n_cells(), |c| {
            let cell = ft.cell(c);
            dv3 * par::block_accumulate::<1, _>(cell.len(), |k, acc| acc[0] += cell[k])[0]
        });
        c0_inf = dens.into_iter().fold(c0_inf, f64::min);
        if t >= t1 {
            let p = field_pass(&ft, &r)?;
            let d = p.components.iter().cloned().fold(0.0, f64::max);
            dev = dev.max((-t / (1.0 - s.nu)).exp() * d);
        }
    }
    let eps_quantity = e_func0 + dev;
    Ok(HypothesisReport {
        nu: s.nu,
        beta: s.beta,
        c0_inf,
        e_func0,
        streamed_deviation: dev,
        eps_quantity,
        t1,
        c_beta,
        n_beta0,
        t_samples: times.len(),
        x_samples: grid.n_cells(),
        c0_threshold: s.c0,
        eps0_threshold: s.eps0,
        c0_ok: c0_inf > s.c0,
        eps_ok: eps_quantity <= s.eps0,
        beta_ok: s.beta > 7.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};
    use std::sync::Arc;

    fn grid(nx: usize, vmax: f64, nv: usize) -> Arc<PhaseGrid> {
        Arc::new(build_grid(&GridSpec::one_d(2.0 * PI, nx, vmax, nv)).unwrap())
    }

    fn scaled(g: &Arc<PhaseGrid>, rho: impl Fn(usize) -> f64) -> DistributionField {
        let mu = gaussian::maxwellian_profile(g);
        let mut v = Vec::with_capacity(g.len());
        for c in 0..g.n_cells() {
            v.extend(mu.iter().map(|m| rho(c) * m));
        }
        DistributionField::new(g.clone(), v, 0.0).unwrap()
    }

    #[test]
    fn equilibrium_functionals_vanish() {
        let g = grid(8, 8.0, 32);
        let f = scaled(&g, |_| 1.0);
        let e = entropy_functionals(&f, &f).unwrap();
        assert!(e.h.abs() < 1e-14);
        assert!(e.h_rel.abs() < 1e-10 && e.prop24 == 0.0 && e.e_func.abs() < 1e-10);
        assert_eq!(macro_deviation(&f).unwrap().max, 0.0);
        assert_eq!(ck_check(&f).unwrap().gap, Some(0.0));
    }

    #[test]
    fn density_perturbation_e_func() {
        let g = grid(8, 8.0, 32);
        let f = scaled(&g, |c| if c < 4 { 0.5 } else { 1.5 });
        let e = entropy_functionals(&f, &f).unwrap();
        let per_volume = e.e_func / g.volume();
        let expect = 0.5 * (0.5 * 0.5f64.ln() - 0.5 + 1.0) + 0.5 * (1.5 * 1.5f64.ln() - 1.5 + 1.0);
        assert!((per_volume - expect).abs() < 1e-4, "{per_volume} vs {expect}");
        assert!(e.prop24 <= e.e_func);
    }

    #[test]
    fn scaled_maxwellian_deviation() {
        let g = grid(4, 8.0, 48);
        let f = scaled(&g, |_| 1.1);
        let d = macro_deviation(&f).unwrap();
        assert!((d.components[0] - 0.1).abs() < 1e-10);
        assert!((d.components[4] - 0.3).abs() < 1e-8);
        let f0 = scaled(&g, |_| 1.0);
        let dd = conservation_defects(&f, &f0).unwrap();
        assert!((dd.mass - 0.1).abs() < 1e-12);
        assert_eq!(conservation_defects(&f0, &f0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn ck_alternating_cells() {
        let g = grid(8, 8.0, 24);
        let f = scaled(&g, |c| if c % 2 == 0 { 1.2 } else { 0.8 });
        let ck = ck_check(&f).unwrap();
        assert!(ck.gap.unwrap() >= 0.0);
        let skewed = scaled(&g, |_| 1.01);
        assert!(ck_check(&skewed).unwrap().gap.is_none());
    }

    #[test]
    fn c_beta_closed_form() {
        let c = c_beta(0.0, 8.0).unwrap();
        assert!((c - 4.0 * PI / 315.0).abs() < 1e-13);
        assert!(c_beta(0.5, 8.0).unwrap() > c);
        assert!(c_beta(0.0, 5.0).is_err());
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &v).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-12);
        assert!(fit_decay_rate(&[0.0], &[1.0]).is_none());
    }

    #[test]
    fn t_samples_are_log_spaced() {
        let t = default_t_samples(0.5, 32);
        assert_eq!(t.len(), 32);
        assert_eq!(t[0], 0.0);
        assert!((t[31] - 10.0).abs() < 1e-12);
        assert!((t[2] / t[1] - t[3] / t[2]).abs() < 1e-12);
    }
}
