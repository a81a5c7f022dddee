#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use esbgk_core::gaussian::maxwellian_profile;
use esbgk_core::grid::{build_grid, GridSpec, PhaseGrid};
use esbgk_core::DistributionField;

pub fn grid_1d(nx: usize, v_max: f64, nv: usize) -> Arc<PhaseGrid> {
    Arc::new(build_grid(&GridSpec::one_d(2.0 * PI, nx, v_max, nv)).unwrap())
}

/// `ρ(c) μ(v)` on every cell.
pub fn scaled_maxwellian(g: &Arc<PhaseGrid>, rho: impl Fn(usize) -> f64) -> DistributionField {
    let mu = maxwellian_profile(g);
    let mut values = Vec::with_capacity(g.len());
    for c in 0..g.n_cells() {
        values.extend(mu.iter().map(|m| rho(c) * m));
    }
    DistributionField::new(Arc::clone(g), values, 0.0).unwrap()
}

/// Brute-force velocity sum `Δv³ Σ f(v_k) h(v_k)`, accumulated in plain order.
pub fn brute_moment(g: &PhaseGrid, f: &[f64], h: impl Fn([f64; 3]) -> f64) -> f64 {
    let mut s = 0.0;
    for (k, &fk) in f.iter().enumerate() {
        s += fk * h(g.velocity(k));
    }
    s * g.dv3()
}

pub fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
