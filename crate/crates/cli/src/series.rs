//! Time-series CSV and snapshot sinks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use esbgk_core::integrator::RunSink;
use esbgk_core::snapshot::write_snapshot;
use esbgk_core::{DiagnosticsRecord, DistributionField, EsbgkError};

pub const HEADER: &str =
    "t,dM,dJx,dJy,dJz,dE,H,H_rel,prop24,E_func,N_beta,macro_dev,rho_min,rho_max,T_min,T_max,u_max,ck_gap,flags";

/// One CSV row; floats carry 17 significant digits.
pub fn format_record(r: &DiagnosticsRecord) -> String {
    let d = &r.defects;
    let fields = [
        r.t,
        d.mass,
        d.momentum[0],
        d.momentum[1],
        d.momentum[2],
        d.energy,
        r.h,
        r.h_rel,
        r.prop24,
        r.e_func,
        r.n_beta,
        r.macro_dev,
        r.bounds[0],
        r.bounds[1],
        r.bounds[2],
        r.bounds[3],
        r.bounds[4],
        r.ck_gap,
    ];
    let mut line = fields.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
    line.push(',');
    line.push_str(&r.flags.token());
    line
}

/// Writes the header on creation and one row per record.
pub struct CsvSeries<W: Write> {
    out: W,
}

impl CsvSeries<BufWriter<File>> {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        CsvSeries::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> CsvSeries<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{HEADER}")?;
        Ok(CsvSeries { out })
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> RunSink for CsvSeries<W> {
    fn record(&mut self, record: &DiagnosticsRecord) -> esbgk_core::Result<()> {
        writeln!(self.out, "{}", format_record(record)).map_err(EsbgkError::from)
    }
}

/// Writes `snapshot_<step>.esbg` files into a directory.
pub struct SnapshotDir {
    pub dir: PathBuf,
}

impl SnapshotDir {
    pub fn path_for(&self, step: usize) -> PathBuf {
        self.dir.join(format!("snapshot_{step:08}.esbg"))
    }
}

impl RunSink for SnapshotDir {
    fn record(&mut self, _: &DiagnosticsRecord) -> esbgk_core::Result<()> {
        Ok(())
    }

    fn snapshot(&mut self, step: usize, field: &DistributionField) -> esbgk_core::Result<()> {
        write_snapshot(field, &self.path_for(step))
    }
}
