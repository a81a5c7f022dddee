mod common;

use std::sync::Arc;

use common::{bits_equal, grid_1d};
use esbgk_core::diagnostics::Monitor;
use esbgk_core::integrator::{run, run_from, Cadence, RunSink};
use esbgk_core::scenarios::{build_initial, ScenarioKind, ScenarioSpec};
use esbgk_core::snapshot::{decode, encode, read_snapshot, read_snapshot_on, write_snapshot};
use esbgk_core::{DistributionField, EsbgkError, Solver, StepConfig};

struct Snapshots {
    dir: std::path::PathBuf,
    written: Vec<usize>,
}

impl RunSink for Snapshots {
    fn record(&mut self, _: &esbgk_core::DiagnosticsRecord) -> esbgk_core::Result<()> {
        Ok(())
    }

    fn snapshot(&mut self, step: usize, field: &DistributionField) -> esbgk_core::Result<()> {
        self.written.push(step);
        write_snapshot(field, &self.dir.join(format!("step{step}.snap")))
    }
}

fn setup() -> (Arc<esbgk_core::PhaseGrid>, DistributionField) {
    let g = grid_1d(8, 6.0, 12);
    let spec = ScenarioSpec::new(ScenarioKind::DensityWave {
        amplitude: 0.5,
        wavenumber: vec![1],
    });
    let f0 = build_initial(&spec, Arc::clone(&g)).unwrap();
    (g, f0)
}

#[test]
fn restart_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let (g, f0) = setup();
    let cfg = StepConfig::new(0.04);

    let mut sink = Snapshots {
        dir: dir.path().to_path_buf(),
        written: Vec::new(),
    };
    let cadence = Cadence {
        record_every: 1,
        snapshot_every: 5,
    };
    let mut s = Solver::new(Arc::clone(&g), 0.5, cfg).unwrap();
    let mut mon = Monitor::new(&f0, 0.5, 8.0).unwrap();
    let full = run(&mut s, f0.clone(), 12, cadence, &mut mon, &mut [&mut sink]).unwrap();
    assert_eq!(sink.written, vec![0, 5, 10]);

    let mid = read_snapshot_on(&dir.path().join("step5.snap"), &g).unwrap();
    assert!((mid.time - 0.2).abs() < 1e-15);
    let mut s2 = Solver::new(Arc::clone(&g), 0.5, cfg).unwrap();
    let mut mon2 = Monitor::new(&f0, 0.5, 8.0).unwrap();
    let rest = run_from(&mut s2, mid, 5, 7, Cadence::default(), &mut mon2, &mut []).unwrap();
    assert!(bits_equal(rest.field.values(), full.field.values()));
    assert_eq!(rest.field.time.to_bits(), full.field.time.to_bits());
    // records after the restart point coincide too
    for (a, b) in rest.records.iter().zip(&full.records[5..]) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.h.to_bits(), b.h.to_bits());
        assert_eq!(a.macro_dev.to_bits(), b.macro_dev.to_bits());
    }
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (g, f0) = setup();
    let path = dir.path().join("a.snap");
    write_snapshot(&f0, &path).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert!(bits_equal(back.values(), f0.values()));
    assert!(back.grid().same_shape(&g));

    let bytes = encode(&f0).unwrap();
    assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 4 + 8 + 8 + 8 + 8 * g.len());
    assert!(matches!(decode(&bytes[..bytes.len() - 8]), Err(EsbgkError::Format(_))));
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0u8; 8]);
    assert!(matches!(decode(&extra), Err(EsbgkError::Format(_))));

    let other = grid_1d(8, 6.0, 14);
    assert!(matches!(read_snapshot_on(&path, &other), Err(EsbgkError::GridMismatch(_))));
    assert!(matches!(read_snapshot(&dir.path().join("missing.snap")), Err(EsbgkError::Io(_))));
}
