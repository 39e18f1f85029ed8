//! Flat binary cache for solved field snapshots, so repeated study runs
//! can skip the PDE solve.
//!
//! Layout (all little-endian): for each spatial axis `n_nodes: u64`,
//! `lo: f64`, `step: f64`; then `dt: f64`, `t_snapshot: f64`,
//! `n_fields: u64`, and the fields as row-major f64 arrays. A 1-D file
//! carries four fields (u, u_x, u_xx, u_t); a 2-D file carries seven
//! (c, c_x, c_y, c_xx, c_yy, c_xy, c_t). Storing the step instead of the
//! upper bound makes the round trip bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulators::burgers::FieldSnapshot1d;
use crate::simulators::diffusion::FieldSnapshot2d;

const FIELDS_1D: u64 = 4;
const FIELDS_2D: u64 = 7;
/// Refuse to allocate for absurd node counts from a corrupt header.
const MAX_NODES_PER_AXIS: u64 = 1 << 24;

fn io_err(action: &str, path: &Path, e: std::io::Error) -> Error {
    Error::DataSource(format!("{action} {}: {e}", path.display()))
}

fn bad_data(message: String) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, message)
}

struct Sink<W: Write>(W);

impl<W: Write> Sink<W> {
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }

    fn field(&mut self, values: &[f64]) -> std::io::Result<()> {
        for v in values {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct Source<R: Read>(R);

impl<R: Read> Source<R> {
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn field(&mut self, len: usize) -> std::io::Result<Vec<f64>> {
        let mut out = vec![0.0; len];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }

    fn expect_end(&mut self) -> std::io::Result<()> {
        let mut extra = [0u8; 1];
        if self.0.read(&mut extra)? == 0 {
            Ok(())
        } else {
            Err(bad_data("trailing bytes after the last field".into()))
        }
    }
}

/// Writes a solved 1-D snapshot to `path`, replacing any existing file.
pub fn write_snapshot_1d(snapshot: &FieldSnapshot1d, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err("create", path, e))?;
    encode_1d(snapshot, Sink(BufWriter::new(file))).map_err(|e| io_err("write", path, e))
}

fn encode_1d<W: Write>(snapshot: &FieldSnapshot1d, mut w: Sink<W>) -> std::io::Result<()> {
    w.u64(snapshot.n_nodes as u64)?;
    w.f64(snapshot.lo)?;
    w.f64(snapshot.step)?;
    w.f64(snapshot.dt)?;
    w.f64(snapshot.t_snapshot)?;
    w.u64(FIELDS_1D)?;
    w.field(&snapshot.u)?;
    w.field(&snapshot.u_x)?;
    w.field(&snapshot.u_xx)?;
    w.field(&snapshot.u_t)?;
    w.0.flush()
}

/// Reads a 1-D snapshot previously written by [`write_snapshot_1d`].
pub fn read_snapshot_1d(path: &Path) -> Result<FieldSnapshot1d> {
    let file = File::open(path).map_err(|e| io_err("open", path, e))?;
    decode_1d(Source(BufReader::new(file))).map_err(|e| io_err("read", path, e))
}

fn decode_1d<R: Read>(mut r: Source<R>) -> std::io::Result<FieldSnapshot1d> {
    let n_nodes = r.u64()?;
    let lo = r.f64()?;
    let step = r.f64()?;
    let dt = r.f64()?;
    let t_snapshot = r.f64()?;
    let n_fields = r.u64()?;
    if n_nodes == 0 || n_nodes > MAX_NODES_PER_AXIS || n_fields != FIELDS_1D {
        return Err(bad_data(format!(
            "implausible header: {n_nodes} nodes, {n_fields} fields"
        )));
    }
    let n = n_nodes as usize;
    let snapshot = FieldSnapshot1d {
        lo,
        step,
        n_nodes: n,
        dt,
        t_snapshot,
        u: r.field(n)?,
        u_x: r.field(n)?,
        u_xx: r.field(n)?,
        u_t: r.field(n)?,
    };
    r.expect_end()?;
    Ok(snapshot)
}

/// Writes a solved 2-D snapshot to `path`, replacing any existing file.
pub fn write_snapshot_2d(snapshot: &FieldSnapshot2d, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err("create", path, e))?;
    encode_2d(snapshot, Sink(BufWriter::new(file))).map_err(|e| io_err("write", path, e))
}

fn encode_2d<W: Write>(snapshot: &FieldSnapshot2d, mut w: Sink<W>) -> std::io::Result<()> {
    for axis in 0..2 {
        w.u64(snapshot.n_nodes[axis] as u64)?;
        w.f64(snapshot.lo[axis])?;
        w.f64(snapshot.step[axis])?;
    }
    w.f64(snapshot.dt)?;
    w.f64(snapshot.t_snapshot)?;
    w.u64(FIELDS_2D)?;
    w.field(&snapshot.c)?;
    w.field(&snapshot.c_x)?;
    w.field(&snapshot.c_y)?;
    w.field(&snapshot.c_xx)?;
    w.field(&snapshot.c_yy)?;
    w.field(&snapshot.c_xy)?;
    w.field(&snapshot.c_t)?;
    w.0.flush()
}

/// Reads a 2-D snapshot previously written by [`write_snapshot_2d`].
pub fn read_snapshot_2d(path: &Path) -> Result<FieldSnapshot2d> {
    let file = File::open(path).map_err(|e| io_err("open", path, e))?;
    decode_2d(Source(BufReader::new(file))).map_err(|e| io_err("read", path, e))
}

fn decode_2d<R: Read>(mut r: Source<R>) -> std::io::Result<FieldSnapshot2d> {
    let mut n_nodes = [0usize; 2];
    let mut lo = [0.0; 2];
    let mut step = [0.0; 2];
    for axis in 0..2 {
        let n = r.u64()?;
        if n == 0 || n > MAX_NODES_PER_AXIS {
            return Err(bad_data(format!("implausible node count {n}")));
        }
        n_nodes[axis] = n as usize;
        lo[axis] = r.f64()?;
        step[axis] = r.f64()?;
    }
    let dt = r.f64()?;
    let t_snapshot = r.f64()?;
    let n_fields = r.u64()?;
    if n_fields != FIELDS_2D {
        return Err(bad_data(format!(
            "expected {FIELDS_2D} fields, found {n_fields}"
        )));
    }
    let n = n_nodes[0] * n_nodes[1];
    let snapshot = FieldSnapshot2d {
        lo,
        step,
        n_nodes,
        dt,
        t_snapshot,
        c: r.field(n)?,
        c_x: r.field(n)?,
        c_y: r.field(n)?,
        c_xx: r.field(n)?,
        c_yy: r.field(n)?,
        c_xy: r.field(n)?,
        c_t: r.field(n)?,
    };
    r.expect_end()?;
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::burgers::{burgers_initial_condition, solve_burgers, Grid1d, BURGERS_NU};
    use crate::simulators::diffusion::{solve_diffusion_2d, two_source_initial_condition, Grid2d};

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("snapshot-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn one_dimensional_round_trip_is_bit_exact() {
        let grid = Grid1d::new(0.0, 10.0, 801, 1e-3).unwrap();
        let snap = solve_burgers(burgers_initial_condition, &grid, BURGERS_NU, 0.05).unwrap();
        let path = temp_path("field-1d.bin");
        write_snapshot_1d(&snap, &path).unwrap();
        let back = read_snapshot_1d(&path).unwrap();
        assert_eq!(snap, back);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn two_dimensional_round_trip_is_bit_exact() {
        let grid = Grid2d::new([0.0, 0.0], [10.0, 10.0], [61, 61], 5e-3).unwrap();
        let snap = solve_diffusion_2d(two_source_initial_condition, &grid, 0.05).unwrap();
        let path = temp_path("field-2d.bin");
        write_snapshot_2d(&snap, &path).unwrap();
        let back = read_snapshot_2d(&path).unwrap();
        assert_eq!(snap, back);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn truncated_files_are_rejected() {
        let grid = Grid1d::new(0.0, 1.0, 101, 1e-5).unwrap();
        let snap = solve_burgers(|x| (x * std::f64::consts::PI).sin(), &grid, BURGERS_NU, 0.0)
            .unwrap();
        let path = temp_path("truncated.bin");
        write_snapshot_1d(&snap, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            read_snapshot_1d(&path).unwrap_err(),
            Error::DataSource(_)
        ));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn mismatched_field_counts_are_rejected() {
        let grid = Grid2d::new([0.0, 0.0], [1.0, 1.0], [21, 21], 1e-4).unwrap();
        let snap = solve_diffusion_2d(|x, y| x * y * (1.0 - x) * (1.0 - y), &grid, 0.0).unwrap();
        let path = temp_path("wrong-kind.bin");
        write_snapshot_2d(&snap, &path).unwrap();
        assert!(read_snapshot_1d(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn missing_files_surface_a_data_source_error() {
        let err = read_snapshot_2d(Path::new("/nonexistent/cache.bin")).unwrap_err();
        assert!(matches!(err, Error::DataSource(_)));
    }
}
