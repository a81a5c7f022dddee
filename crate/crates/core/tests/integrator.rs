mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{bits_equal, grid_1d, scaled_maxwellian};
use esbgk_core::diagnostics::{totals, Monitor};
use esbgk_core::gaussian::{eval_gaussian, GaussianParams};
use esbgk_core::grid::{build_grid, GridSpec, PhaseGrid};
use esbgk_core::integrator::{run, Cadence, MemorySink, RelaxationMode, RunSink};
use esbgk_core::linalg::Sym3;
use esbgk_core::par::{with_exec, Exec};
use esbgk_core::scenarios::{build_initial, ScenarioKind, ScenarioSpec};
use esbgk_core::{compute_moments, DistributionField, Solver, StepConfig};
use proptest::prelude::*;

/// Field with `values(x, v_x)` in every cell, ignoring `v_y, v_z`.
fn field_of(g: &Arc<PhaseGrid>, values: impl Fn(f64, f64) -> f64) -> DistributionField {
    let mut out = Vec::with_capacity(g.len());
    for c in 0..g.n_cells() {
        let x = g.cell_position(c)[0];
        out.extend(g.velocities().iter().map(|v| values(x, v[0])));
    }
    DistributionField::new(Arc::clone(g), out, 0.0).unwrap()
}

fn transport(g: &Arc<PhaseGrid>, f: &DistributionField, dt: f64) -> DistributionField {
    Solver::new(Arc::clone(g), 0.5, StepConfig::new(dt))
        .unwrap()
        .transport_step(f)
        .unwrap()
        .0
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn homogeneous_transport_is_identity() {
    let g = grid_1d(8, 6.0, 10);
    let f = scaled_maxwellian(&g, |_| 1.3);
    for dt in [0.01, 0.37, 5.0] {
        assert!(bits_equal(transport(&g, &f, dt).values(), f.values()));
    }
}

#[test]
fn integer_shift_is_exact() {
    // nodes i·Δv, i = -4..=4; dt = 2Δx/Δv moves node i by 2i cells
    let g = grid_1d(8, 4.0, 9);
    let step = g.dx()[0] / g.dv();
    let f = field_of(&g, |x, v| 1.0 + (x + 0.3 * v).sin().powi(2));
    let out = transport(&g, &f, 2.0 * step);
    let nvel = g.n_vel();
    for c in 0..8 {
        for k in 0..nvel {
            let s = (2.0 * g.velocity(k)[0] / g.dv()).round() as isize;
            let src = (c as isize - s).rem_euclid(8) as usize;
            assert_eq!(out.cell(c)[k].to_bits(), f.cell(src)[k].to_bits());
        }
    }
    // two exact half steps compose to the full step
    let half = transport(&g, &transport(&g, &f, step), step);
    assert!(bits_equal(half.values(), out.values()));
}

fn bump_errors(nx: usize) -> (f64, f64) {
    let g = grid_1d(nx, 1.0, 8);
    let bump = |x: f64| (x.cos()).exp();
    let f = field_of(&g, |x, _| bump(x));
    let dt = 0.3;
    let one = transport(&g, &f, dt);
    let two = transport(&g, &transport(&g, &f, 0.5 * dt), 0.5 * dt);
    let exact = field_of(&g, |x, v| bump(x - v * dt));
    (max_diff(one.values(), exact.values()), max_diff(one.values(), two.values()))
}

#[test]
fn bump_transport_is_second_order() {
    let (e_coarse, d_coarse) = bump_errors(32);
    let (e_fine, d_fine) = bump_errors(128);
    assert!(d_coarse > 1e-6, "half steps should not compose exactly");
    let r_err = e_coarse / e_fine;
    let r_split = d_coarse / d_fine;
    assert!((10.0..24.0).contains(&r_err), "error ratio {r_err}");
    assert!((8.0..32.0).contains(&r_split), "split ratio {r_split}");
}

#[test]
fn transport_conserves_mass_per_velocity() {
    let g = grid_1d(16, 4.0, 8);
    let f = field_of(&g, |x, v| (1.0 + 0.5 * (x - v).cos()) * (-v * v).exp());
    let out = transport(&g, &f, 0.173);
    for k in 0..g.n_vel() {
        let a: f64 = (0..16).map(|c| f.cell(c)[k]).sum();
        let b: f64 = (0..16).map(|c| out.cell(c)[k]).sum();
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
    }
}

#[test]
fn equilibrium_is_a_relaxation_fixed_point() {
    let g = grid_1d(4, 6.0, 16);
    let mu = scaled_maxwellian(&g, |_| 1.0);
    let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.2)).unwrap();
    let (out, report) = s.relaxation_step(&mu).unwrap();
    assert!(max_diff(out.values(), mu.values()) < 1e-12);
    assert_eq!(report.fallbacks, 0);
}

#[test]
fn infinite_step_lands_on_the_target() {
    let g = grid_1d(4, 8.0, 32);
    let p = GaussianParams::new(1.2, [0.3, -0.1, 0.0], Sym3::diag(1.4, 0.8, 1.0)).unwrap();
    let f = DistributionField::homogeneous(Arc::clone(&g), &eval_gaussian(&p, &g).values).unwrap();
    let mut s = Solver::new(Arc::clone(&g), 0.4, StepConfig::new(1e6)).unwrap();
    let target = s.relaxation_targets(&f).unwrap();
    let (out, _) = s.relaxation_step(&f).unwrap();
    assert!(bits_equal(out.values(), target.values()));
    let before = compute_moments(&f, 0.4).unwrap();
    let after = compute_moments(&out, 0.4).unwrap();
    for (a, b) in before.cells.iter().zip(&after.cells) {
        assert!((a.rho - b.rho).abs() < 1e-12 * a.rho);
        assert!((0..3).all(|i| (a.u[i] - b.u[i]).abs() < 1e-12));
        assert!((a.temperature - b.temperature).abs() < 1e-12 * a.temperature);
        // the target carries T_ν
        assert!((b.theta - a.tnu).max_abs() < 1e-10);
    }
}

#[test]
fn bgk_relaxation_of_anisotropy() {
    let g = Arc::new(build_grid(&GridSpec::one_d(2.0 * PI, 4, 10.0, 40)).unwrap());
    let spec = ScenarioSpec::new(ScenarioKind::AnisotropicHomogeneous {
        sigma: Sym3::diag(2.0, 0.5, 0.5),
    });
    let mut f = build_initial(&spec, Arc::clone(&g)).unwrap();
    let mut s = Solver::new(Arc::clone(&g), 0.0, StepConfig::new(0.1)).unwrap();
    let theta = |f: &DistributionField| compute_moments(f, 0.0).unwrap().cells[0].theta;
    let mut prev = theta(&f);
    assert!((prev.get(0, 0) - 2.0).abs() < 1e-6);
    let factor = (-0.1f64).exp();
    for _ in 0..5 {
        f = s.step(&f).unwrap().0;
        let next = theta(&f);
        let want = factor * (prev - Sym3::identity()) + Sym3::identity();
        assert!((next - want).max_abs() < 1e-10, "{next:?} vs {want:?}");
        prev = next;
    }
}

#[test]
fn duhamel_sum_for_three_steps() {
    let g = grid_1d(8, 5.0, 12);
    let spec = ScenarioSpec::new(ScenarioKind::DensityWave {
        amplitude: 0.4,
        wavenumber: vec![1],
    });
    let f0 = build_initial(&spec, Arc::clone(&g)).unwrap();
    let rate = 0.8;
    let dt = 0.15;
    let mut cfg = StepConfig::new(dt);
    cfg.frozen_rate = Some(rate);
    let mut s = Solver::new(Arc::clone(&g), 0.5, cfg).unwrap();

    let mut f = f0.clone();
    let mut targets = Vec::new();
    for _ in 0..3 {
        let (ft, _) = s.transport_step(&f).unwrap();
        targets.push(s.relaxation_targets(&ft).unwrap());
        f = s.step(&f).unwrap().0;
    }

    // F³ = θ³ S³F⁰ + (1 - θ) Σ_j θ^{2-j} S^{2-j} M_j, with M_j built after transport
    let theta = (-rate * dt).exp();
    let shift = |h: &DistributionField, n: usize| (0..n).fold(h.clone(), |a, _| s.transport_step(&a).unwrap().0);
    let mut oracle: Vec<f64> = shift(&f0, 3).values().iter().map(|x| theta.powi(3) * x).collect();
    for (j, m) in targets.iter().enumerate() {
        let w = (1.0 - theta) * theta.powi(2 - j as i32);
        for (o, x) in oracle.iter_mut().zip(shift(m, 2 - j).values()) {
            *o += w * x;
        }
    }
    let scale = f.values().iter().cloned().fold(0.0, f64::max);
    assert!(max_diff(f.values(), &oracle) < 1e-13 * scale);
    assert!((f.time - 3.0 * dt).abs() < 1e-15);
}

#[test]
fn picard_one_matches_explicit_step() {
    let g = grid_1d(4, 6.0, 14);
    let spec = ScenarioSpec::new(ScenarioKind::AnisotropicHomogeneous {
        sigma: Sym3::diag(1.5, 0.75, 0.75),
    });
    let f = build_initial(&spec, Arc::clone(&g)).unwrap();
    let mut explicit = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.3)).unwrap();
    let mut cfg = StepConfig::new(0.3);
    cfg.relaxation = RelaxationMode::Picard(1);
    let mut picard = Solver::new(Arc::clone(&g), 0.5, cfg).unwrap();
    let a = explicit.step(&f).unwrap().0;
    let b = picard.step(&f).unwrap().0;
    assert!(bits_equal(a.values(), b.values()));
    cfg.relaxation = RelaxationMode::Picard(4);
    let c = Solver::new(Arc::clone(&g), 0.5, cfg).unwrap().step(&f).unwrap().0;
    assert!(max_diff(a.values(), c.values()) > 0.0);
    let (ta, tc) = (totals(&a).unwrap(), totals(&c).unwrap());
    assert!((ta.mass - tc.mass).abs() < 1e-12 * ta.mass);
    assert!((ta.energy - tc.energy).abs() < 1e-12 * ta.energy);
}

#[test]
fn equilibrium_step_is_a_fixed_point() {
    let g = grid_1d(4, 6.0, 12);
    let mu = scaled_maxwellian(&g, |_| 1.0);
    let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.05)).unwrap();
    let f1 = s.step(&mu).unwrap().0;
    let f2 = s.step(&f1).unwrap().0;
    // the re-matched target moves far-tail nodes by a few ulps of their exponent
    let rel = f1.values().iter().zip(f2.values()).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
    assert!(rel < 1e-12, "{rel:e}");
    assert!(max_diff(f1.values(), mu.values()) < 1e-14);
}

#[test]
fn run_with_zero_steps_emits_initial_record() {
    let g = grid_1d(4, 6.0, 12);
    let f0 = scaled_maxwellian(&g, |c| 1.0 + 0.1 * c as f64);
    let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.05)).unwrap();
    let mut mon = Monitor::new(&f0, 0.5, 8.0).unwrap();
    let mut sink = MemorySink::default();
    let out = run(&mut s, f0, 0, Cadence::default(), &mut mon, &mut [&mut sink]).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(sink.records.len(), 1);
    assert_eq!(out.records[0].t, 0.0);
    assert_eq!(out.steps_completed, 0);
}

#[test]
fn equilibrium_run_has_constant_records() {
    let g = grid_1d(4, 6.0, 12);
    let f0 = scaled_maxwellian(&g, |_| 1.0);
    let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.05)).unwrap();
    let mut mon = Monitor::new(&f0, 0.5, 8.0).unwrap();
    let cadence = Cadence {
        record_every: 10,
        snapshot_every: 0,
    };
    let out = run(&mut s, f0, 100, cadence, &mut mon, &mut []).unwrap();
    assert_eq!(out.records.len(), 11);
    let r0 = &out.records[0];
    for r in &out.records {
        assert!(r.defects.max_abs() < 1e-12);
        assert!((r.h - r0.h).abs() < 1e-12);
        assert!((r.h_rel - r0.h_rel).abs() < 1e-12);
        assert!((r.macro_dev - r0.macro_dev).abs() < 1e-12);
        assert!((r.n_beta - r0.n_beta).abs() < 1e-12 * r0.n_beta);
        assert!(!r.flags.any());
    }
    assert!((out.records[10].t - 5.0).abs() < 1e-12);
}

struct FailingSink {
    after: usize,
    seen: usize,
}

impl RunSink for FailingSink {
    fn record(&mut self, _: &esbgk_core::DiagnosticsRecord) -> esbgk_core::Result<()> {
        self.seen += 1;
        if self.seen > self.after {
            return Err(std::io::Error::other("disk full").into());
        }
        Ok(())
    }
}

#[test]
fn sink_failure_stops_the_run() {
    let g = grid_1d(4, 6.0, 12);
    let f0 = scaled_maxwellian(&g, |_| 1.0);
    let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.05)).unwrap();
    let mut mon = Monitor::new(&f0, 0.5, 8.0).unwrap();
    let mut sink = FailingSink { after: 3, seen: 0 };
    let out = run(&mut s, f0, 10, Cadence::default(), &mut mon, &mut [&mut sink]).unwrap();
    assert_eq!(out.steps_completed, 3);
    assert!(out.aborted.unwrap().contains("disk full"));
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let g = grid_1d(16, 6.0, 14);
    let spec = ScenarioSpec::new(ScenarioKind::DensityWave {
        amplitude: 0.5,
        wavenumber: vec![1],
    });
    let f0 = build_initial(&spec, Arc::clone(&g)).unwrap();
    let go = |exec| {
        with_exec(exec, || {
            let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(0.05)).unwrap();
            let mut mon = Monitor::new(&f0, 0.5, 8.0).unwrap();
            run(&mut s, f0.clone(), 5, Cadence::default(), &mut mon, &mut []).unwrap()
        })
    };
    let a = go(Exec::Sequential);
    let b = go(Exec::Parallel);
    assert!(bits_equal(a.field.values(), b.field.values()));
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.h.to_bits(), y.h.to_bits());
        assert_eq!(x.macro_dev.to_bits(), y.macro_dev.to_bits());
        assert_eq!(x.defects.max_abs().to_bits(), y.defects.max_abs().to_bits());
    }
}

fn perturbed_state(g: &Arc<PhaseGrid>, amp: f64, phase: f64, drift: f64) -> DistributionField {
    field_of(g, |x, v| {
        let rho = 1.0 + amp * (x + phase).cos();
        rho * (-(v - drift * (x).sin()).powi(2) / 2.0).exp()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn steps_keep_positivity(amp in 0.0f64..0.99, phase in 0.0f64..6.3, drift in -0.5f64..0.5, dt in 0.001f64..5.0) {
        let g = grid_1d(8, 5.0, 10);
        let mut f = perturbed_state(&g, amp, phase, drift);
        let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(dt)).unwrap();
        for _ in 0..3 {
            f = s.step(&f).unwrap().0;
            prop_assert!(f.values().iter().all(|&x| x >= 0.0 && x.is_finite()));
        }
    }

    #[test]
    fn matched_steps_conserve_totals(amp in 0.0f64..0.9, phase in 0.0f64..6.3, drift in -0.3f64..0.3, dt in 0.01f64..0.5) {
        let g = grid_1d(8, 6.0, 14);
        let f0 = perturbed_state(&g, amp, phase, drift);
        let t0 = totals(&f0).unwrap();
        let mut s = Solver::new(Arc::clone(&g), 0.5, StepConfig::new(dt)).unwrap();
        let mut f = f0.clone();
        for _ in 0..3 {
            f = s.step(&f).unwrap().0;
        }
        let d = totals(&f).unwrap().defects_from(&t0);
        prop_assert!(d.max_abs() < 1e-12, "{:?}", d);
    }
}
