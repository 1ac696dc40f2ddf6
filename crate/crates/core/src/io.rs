//! On-disk formats: binary wave-function frames, CSV tables and content hashes.
//!
//! A frame file (`.bwf`) is little-endian: the magic `BWF1`, a `u32` format
//! version, `u32` dimension count, per-axis `(min, max)` as `f64` pairs,
//! per-axis point counts as `u64`, a `u32` spin count, the time as `f64`,
//! then the amplitudes as interleaved `(re, im)` `f64` pairs, spin component
//! slowest and row-major within a component.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{Grid, GridError, WaveFunction};
use crate::guidance::{Ensemble, Trajectory, TrajectoryStatus};

pub const FRAME_MAGIC: &[u8; 4] = b"BWF1";
pub const FRAME_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a frame file (bad magic)")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    Version(u32),
    #[error("frame file is truncated or has trailing data")]
    Length,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("table {name}: {message}")]
    Table { name: String, message: String },
}

pub fn write_frame(w: &mut impl Write, psi: &WaveFunction) -> Result<(), IoError> {
    let grid = psi.grid();
    let mut buf = Vec::with_capacity(64 + 16 * psi.amplitudes().len());
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dims() as u32).to_le_bytes());
    for (lo, hi) in grid.extents() {
        buf.extend_from_slice(&lo.to_le_bytes());
        buf.extend_from_slice(&hi.to_le_bytes());
    }
    for n in grid.points() {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(psi.spin_components() as u32).to_le_bytes());
    buf.extend_from_slice(&psi.time().to_le_bytes());
    for z in psi.amplitudes() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        let end = self.pos.checked_add(N).ok_or(IoError::Length)?;
        let bytes = self.data.get(self.pos..end).ok_or(IoError::Length)?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length N"))
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_frame(data: &[u8]) -> Result<WaveFunction, IoError> {
    let mut c = Cursor { data, pos: 0 };
    if &c.take::<4>()? != FRAME_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = c.u32()?;
    if version != FRAME_VERSION {
        return Err(IoError::Version(version));
    }
    let dims = c.u32()? as usize;
    if dims > crate::grid::MAX_DIMS {
        return Err(GridError::TooManyDimensions(dims).into());
    }
    let extents = (0..dims).map(|_| Ok((c.f64()?, c.f64()?))).collect::<Result<Vec<_>, IoError>>()?;
    let points = (0..dims).map(|_| Ok(c.u64()? as usize)).collect::<Result<Vec<_>, IoError>>()?;
    let spin = c.u32()? as usize;
    let time = c.f64()?;
    let grid = Grid::new(&extents, &points)?;
    let count = grid.len().checked_mul(spin).ok_or(IoError::Length)?;
    if data.len() - c.pos != count * 16 {
        return Err(IoError::Length);
    }
    let amps = (0..count).map(|_| Ok(Complex64::new(c.f64()?, c.f64()?))).collect::<Result<Vec<_>, IoError>>()?;
    Ok(WaveFunction::new(grid, spin, amps, time)?)
}

pub fn read_frame(r: &mut impl Read) -> Result<WaveFunction, IoError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    decode_frame(&data)
}

pub fn save_frame(path: &Path, psi: &WaveFunction) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_frame(&mut buf, psi)?;
    write_file(path, &buf)
}

pub fn load_frame(path: &Path) -> Result<WaveFunction, IoError> {
    decode_frame(&read_file(path)?)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| IoError::File { path: parent.display().to_string(), source })?;
    }
    fs::write(path, bytes).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Deserialize an `f64` that JSON may carry as `null` for NaN.
pub fn f64_or_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(<Option<f64> as serde::Deserialize>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// A cell of a CSV table.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            Value::Int(i) => write!(out, "{i}").expect("write to string"),
            // 17 significant digits round-trip every f64
            Value::Float(x) => write!(out, "{x:.16e}").expect("write to string"),
            Value::Text(s) => out.push_str(s),
            Value::Empty => {}
        }
    }

    fn parse(s: &str) -> Value {
        if s.is_empty() {
            Value::Empty
        } else if let Ok(i) = s.parse::<i64>() {
            Value::Int(i)
        } else if let Ok(x) = s.parse::<f64>() {
            Value::Float(x)
        } else {
            Value::Text(s.to_string())
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Empty, Into::into)
    }
}

/// A named-column table stored as plain CSV (no quoting; cells never contain commas).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn require(&self, name: &str) -> Result<usize, IoError> {
        self.column_index(name)
            .ok_or_else(|| IoError::Table { name: name.into(), message: format!("missing column (have {:?})", self.columns) })
    }

    /// A numeric column; empty cells become NaN.
    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>, IoError> {
        let i = self.require(name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Value::Empty => Ok(f64::NAN),
                v => v.as_f64().ok_or_else(|| IoError::Table { name: name.into(), message: format!("non-numeric cell {v:?}") }),
            })
            .collect()
    }

    pub fn text_column(&self, name: &str) -> Result<Vec<String>, IoError> {
        let i = self.require(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| match &r[i] {
                Value::Text(s) => s.clone(),
                other => {
                    let mut s = String::new();
                    other.render(&mut s);
                    s
                }
            })
            .collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                v.render(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, IoError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| IoError::Table { name: "csv".into(), message: "empty file".into() })?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let row: Vec<Value> = line.split(',').map(Value::parse).collect();
            if row.len() != columns.len() {
                return Err(IoError::Table {
                    name: "csv".into(),
                    message: format!("row {} has {} cells, expected {}", n + 1, row.len(), columns.len()),
                });
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}

/// `trajectory_id,t,q_0,…,status`, one row per recorded sample.
pub fn ensemble_table(ensemble: &Ensemble) -> Table {
    let dims = ensemble.trajectories.first().map_or(0, |t| t.initial().dims());
    let mut columns = vec!["trajectory_id".to_string(), "t".to_string()];
    columns.extend((0..dims).map(|a| format!("q_{a}")));
    columns.push("status".into());
    let mut table = Table::new(columns);
    for tr in &ensemble.trajectories {
        for c in &tr.samples {
            let mut row = vec![Value::from(tr.seed_index), Value::from(c.time)];
            row.extend(c.coords.iter().map(|x| Value::from(*x)));
            row.push(Value::from(tr.status.as_str()));
            table.push(row);
        }
    }
    table
}

/// Inverse of [`ensemble_table`]; `v_max` is not stored and comes back as zero.
pub fn ensemble_from_table(table: &Table) -> Result<Ensemble, IoError> {
    let ids = table.f64_column("trajectory_id")?;
    let times = table.f64_column("t")?;
    let status = table.text_column("status")?;
    let dims = table.columns.iter().filter(|c| c.starts_with("q_")).count();
    let coords: Vec<Vec<f64>> = (0..dims).map(|a| table.f64_column(&format!("q_{a}"))).collect::<Result<_, _>>()?;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for r in 0..table.len() {
        let id = ids[r] as usize;
        let st = TrajectoryStatus::parse(&status[r])
            .ok_or_else(|| IoError::Table { name: "status".into(), message: format!("unknown status {:?}", status[r]) })?;
        let cfg = crate::grid::Configuration::new(coords.iter().map(|c| c[r]).collect(), times[r]);
        match trajectories.last_mut() {
            Some(t) if t.seed_index == id => t.samples.push(cfg),
            _ => trajectories.push(Trajectory { samples: vec![cfg], status: st, seed_index: id, v_max: 0.0 }),
        }
    }
    Ok(Ensemble { trajectories, v_max: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Configuration};

    #[test]
    fn frame_round_trip_is_exact() {
        let g = make_grid(&[(-1.0, 2.0), (0.0, 1.0)], &[8, 16]).unwrap();
        let psi = WaveFunction::from_spinor_fns(
            &g,
            0.125,
            &[&|q: &[f64]| Complex64::new(q[0].sin(), q[1] / 3.0), &|q: &[f64]| Complex64::new(1e-300, q[0] * q[1])],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_frame(&mut buf, &psi).unwrap();
        assert_eq!(&buf[..4], b"BWF1");
        assert_eq!(decode_frame(&buf).unwrap(), psi);
        assert!(matches!(decode_frame(&buf[..buf.len() - 1]), Err(IoError::Length)));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode_frame(&bad), Err(IoError::BadMagic)));
    }

    #[test]
    fn csv_floats_round_trip() {
        let mut t = Table::new(["a", "b", "c"]);
        for x in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX] {
            t.push(vec![x.into(), 7usize.into(), Value::from(None::<f64>)]);
        }
        let back = Table::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn ensemble_table_round_trip() {
        let tr = |id: usize, st| Trajectory {
            samples: vec![Configuration::new(vec![0.1, 0.2], 0.0), Configuration::new(vec![0.3, 0.4], 0.5)],
            status: st,
            seed_index: id,
            v_max: 0.0,
        };
        let e = Ensemble { trajectories: vec![tr(0, TrajectoryStatus::Completed), tr(1, TrajectoryStatus::AbortedNode)], v_max: 0.0 };
        let table = ensemble_table(&e);
        assert_eq!(table.columns, ["trajectory_id", "t", "q_0", "q_1", "status"]);
        assert_eq!(ensemble_from_table(&Table::from_csv(&table.to_csv()).unwrap()).unwrap(), e);
    }
}
