//! Binary snapshots of a [`DistributionField`].
//!
//! Layout, all little endian:
//!
//! | bytes            | content                               |
//! |------------------|---------------------------------------|
//! | 4                | magic `ESBG`                          |
//! | 4 (u32)          | format version, currently 1           |
//! | 4 (u32)          | spatial dimensions `d`                |
//! | 4·d (u32)        | cell counts per axis                  |
//! | 4 (u32)          | velocity nodes per axis               |
//! | 8·d (f64)        | periods per axis                      |
//! | 8 (f64)          | `V_max`                               |
//! | 8 (f64)          | time                                  |
//! | 8·len (f64)      | values in field layout order          |
//!
//! Velocity placement is implied by the parity of the node count.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{EsbgkError, Result};
use crate::field::DistributionField;
use crate::grid::{build_grid, GridSpec, PhaseGrid, VelocityPlacement};

pub const MAGIC: [u8; 4] = *b"ESBG";
pub const VERSION: u32 = 1;

fn u32_of(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| EsbgkError::Format(format!("{what} = {x} does not fit the header")))
}

pub fn encode(f: &DistributionField) -> Result<Vec<u8>> {
    let g = f.grid();
    let d = g.spatial_dims();
    let mut out = Vec::with_capacity(20 + 12 * d + 16 + 8 * f.values().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(d, "spatial_dims")?.to_le_bytes());
    for &n in g.counts() {
        out.extend_from_slice(&u32_of(n, "cell count")?.to_le_bytes());
    }
    out.extend_from_slice(&u32_of(g.nv(), "nv")?.to_le_bytes());
    for &l in g.extent() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&g.v_max().to_le_bytes());
    out.extend_from_slice(&f.time.to_le_bytes());
    for &x in f.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(EsbgkError::Format(format!(
                "truncated header: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a snapshot; the grid is rebuilt from the header.
pub fn decode(data: &[u8]) -> Result<DistributionField> {
    let mut c = Cursor { data, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(EsbgkError::Format("bad magic, not a snapshot".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(EsbgkError::Format(format!("unsupported version {version}")));
    }
    let d = c.u32()? as usize;
    if !(1..=3).contains(&d) {
        return Err(EsbgkError::Format(format!("bad spatial dimension {d}")));
    }
    let counts = (0..d).map(|_| c.u32().map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
    let nv = c.u32()? as usize;
    let extent = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let v_max = c.f64()?;
    let time = c.f64()?;
    let grid = build_grid(&GridSpec {
        spatial_dims: d,
        extent,
        counts,
        v_max,
        nv,
        placement: VelocityPlacement::for_count(nv),
    })
    .map_err(|e| EsbgkError::Format(format!("invalid header: {e}")))?;
    let body = &data[c.pos..];
    let expect = grid.len().checked_mul(8);
    if expect != Some(body.len()) {
        return Err(EsbgkError::Format(format!(
            "size mismatch: header implies {} values, found {} bytes",
            grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    DistributionField::new(Arc::new(grid), values, time)
}

pub fn write_snapshot(f: &DistributionField, path: &Path) -> Result<()> {
    let bytes = encode(f)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<DistributionField> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    decode(&data)
}

/// Reads a snapshot and checks that it lives on a grid of the given shape;
/// the returned field shares `grid`.
pub fn read_snapshot_on(path: &Path, grid: &Arc<PhaseGrid>) -> Result<DistributionField> {
    let f = read_snapshot(path)?;
    if !f.grid().same_shape(grid) {
        return Err(EsbgkError::GridMismatch(format!(
            "snapshot {} does not match the configured grid",
            path.display()
        )));
    }
    let time = f.time;
    DistributionField::new(Arc::clone(grid), f.into_values(), time)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> DistributionField {
        let g = Arc::new(
            build_grid(&GridSpec {
                spatial_dims: 2,
                extent: vec![1.5, 2.0],
                counts: vec![4, 5],
                v_max: 3.0,
                nv: 9,
                placement: VelocityPlacement::NodeCentered,
            })
            .unwrap(),
        );
        let vals = (0..g.len()).map(|i| (i as f64 * 0.37).sin().abs() / 3.0).collect();
        DistributionField::new(g, vals, 0.125).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let f = field();
        let back = decode(&encode(&f).unwrap()).unwrap();
        assert_eq!(back.time.to_bits(), f.time.to_bits());
        assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(back.grid().same_shape(f.grid()));
    }

    #[test]
    fn truncation_and_magic_are_rejected() {
        let bytes = encode(&field()).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(EsbgkError::Format(_))));
        assert!(matches!(decode(&bytes[..10]), Err(EsbgkError::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(decode(&v2).is_err());
    }
}
