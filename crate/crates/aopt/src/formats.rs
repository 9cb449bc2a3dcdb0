//! File formats: CSV tables, boundary profiles and binary field dumps.
//!
//! Numbers in text files use 17 significant digits, which round-trips every
//! `f64`. Binary dumps are little-endian with a 32-byte header
//! (`"AOPT"`, version, `Nt+1`, `Nx`, `Nz`, zero padding) followed by the
//! values in time-x-z row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use aopt_core::geometry::{BoundaryProfile, ReferenceDomain};
use aopt_core::params::TimeGrid;
use aopt_core::spacetime::SpaceTime;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"AOPT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// Full-precision decimal representation.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_num(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{}:{line}: '{}' is not a number", path.display(), s.trim())))
}

/// Line-oriented CSV writer with a fixed header.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = Self {
            path,
            out: BufWriter::new(file),
            columns: header.len(),
        };
        w.line(&header.join(","))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    /// Writes leading text cells followed by numeric cells.
    pub fn row(&mut self, text: &[&str], values: &[f64]) -> Result<()> {
        debug_assert_eq!(text.len() + values.len(), self.columns);
        let cells: Vec<String> = text.iter().map(|s| s.to_string()).chain(values.iter().map(|v| num(*v))).collect();
        self.line(&cells.join(","))
    }

    /// Writes integer cells followed by numeric cells.
    pub fn indexed(&mut self, ints: &[usize], values: &[f64]) -> Result<()> {
        debug_assert_eq!(ints.len() + values.len(), self.columns);
        let cells: Vec<String> = ints.iter().map(|i| i.to_string()).chain(values.iter().map(|v| num(*v))).collect();
        self.line(&cells.join(","))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Reads a numeric CSV with a header line; returns the header and the rows.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| CliError::io(path, e))?,
        None => return Err(CliError::Config(format!("{}: empty file", path.display()))),
    };
    let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(|s| parse_num(s, path, k + 2)).collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(CliError::Config(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                k + 2,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Writes a profile as `x,ell`.
pub fn write_profile(path: impl AsRef<Path>, dom: &ReferenceDomain, ell: &BoundaryProfile) -> Result<()> {
    let mut w = CsvWriter::create(path, &["x", "ell"])?;
    for (i, v) in ell.ell.iter().enumerate() {
        w.row(&[], &[dom.x(i), *v])?;
    }
    w.finish()
}

/// Reads an `x,ell` profile and checks that its abscissae match the grid.
pub fn read_profile(path: impl AsRef<Path>, dom: &ReferenceDomain) -> Result<BoundaryProfile> {
    let path = path.as_ref();
    let (header, rows) = read_csv(path)?;
    if header != ["x", "ell"] {
        return Err(CliError::Config(format!("{}: header must be 'x,ell'", path.display())));
    }
    if rows.len() != dom.nx {
        return Err(CliError::Config(format!(
            "{}: {} profile nodes for a grid with nx = {}",
            path.display(),
            rows.len(),
            dom.nx
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        if (r[0] - dom.x(i)).abs() > 1e-9 * dom.lx {
            return Err(CliError::Config(format!(
                "{}: node {i} at x = {} does not match the grid (x = {})",
                path.display(),
                r[0],
                dom.x(i)
            )));
        }
    }
    let mut ell = BoundaryProfile::flat(dom);
    ell.ell = rows.iter().map(|r| r[1]).collect();
    Ok(ell)
}

/// Dimensions stored in a binary dump header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpShape {
    pub n_time: usize,
    pub nx: usize,
    pub nz: usize,
}

impl DumpShape {
    pub fn len(&self) -> usize {
        self.n_time * self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| CliError::Config(format!("{what} = {v} does not fit the dump header")))
}

/// Writes a binary dump; `values` must already be in time-x-z order.
pub fn write_dump(path: impl AsRef<Path>, shape: DumpShape, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(values.len(), shape.len(), "dump size");
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&u32_of(shape.n_time, "Nt+1")?.to_le_bytes());
    header[12..16].copy_from_slice(&u32_of(shape.nx, "Nx")?.to_le_bytes());
    header[16..20].copy_from_slice(&u32_of(shape.nz, "Nz")?.to_le_bytes());
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    out.write_all(&header).map_err(io)?;
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a binary dump written by [`write_dump`].
pub fn read_dump(path: impl AsRef<Path>) -> Result<(DumpShape, Vec<f64>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    let bad = |why: &str| CliError::Config(format!("{}: {why}", path.display()));
    if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
        return Err(bad("not an AOPT dump"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("four bytes")) as usize;
    if word(4) != VERSION as usize {
        return Err(bad("unsupported dump version"));
    }
    let shape = DumpShape {
        n_time: word(8),
        nx: word(12),
        nz: word(16),
    };
    if bytes.len() != HEADER_LEN + 8 * shape.len() {
        return Err(bad("payload size does not match the header"));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok((shape, values))
}

/// Dumps a field over the acoustic grid (node ordering `j * nx + i`).
pub fn write_volume_field(path: impl AsRef<Path>, dom: &ReferenceDomain, f: &SpaceTime) -> Result<DumpShape> {
    let shape = DumpShape {
        n_time: f.n_time(),
        nx: dom.nx,
        nz: dom.nz(),
    };
    let mut values = Vec::with_capacity(shape.len());
    for n in 0..f.n_time() {
        let row = f.row(n);
        for i in 0..dom.nx {
            for j in 0..dom.nz() {
                values.push(row[dom.node(i, j)]);
            }
        }
    }
    write_dump(path, shape, &values)?;
    Ok(shape)
}

/// Reads a volume dump back into node ordering.
pub fn read_volume_field(path: impl AsRef<Path>, dom: &ReferenceDomain) -> Result<SpaceTime> {
    let path = path.as_ref();
    let (shape, values) = read_dump(path)?;
    if shape.nx != dom.nx || shape.nz != dom.nz() {
        return Err(CliError::Config(format!("{}: dump grid does not match the configuration", path.display())));
    }
    let mut f = SpaceTime::zeros(shape.n_time, dom.n_nodes());
    let mut k = 0;
    for n in 0..shape.n_time {
        for i in 0..dom.nx {
            for j in 0..dom.nz() {
                f.set(n, dom.node(i, j), values[k]);
                k += 1;
            }
        }
    }
    Ok(f)
}

/// Dumps a field on a line of nodes (boundary or plate) with `Nz = 1`.
pub fn write_line_field(path: impl AsRef<Path>, f: &SpaceTime) -> Result<DumpShape> {
    let shape = DumpShape {
        n_time: f.n_time(),
        nx: f.n_space(),
        nz: 1,
    };
    write_dump(path, shape, f.as_slice())?;
    Ok(shape)
}

/// Reads a line dump with the expected shape.
pub fn read_line_field(path: impl AsRef<Path>, n_time: usize, n_space: usize) -> Result<SpaceTime> {
    let path = path.as_ref();
    let (shape, values) = read_dump(path)?;
    if shape.n_time != n_time || shape.nx != n_space || shape.nz != 1 {
        return Err(CliError::Config(format!(
            "{}: expected a {}x{} line field, found {}x{}x{}",
            path.display(),
            n_time,
            n_space,
            shape.n_time,
            shape.nx,
            shape.nz
        )));
    }
    Ok(SpaceTime::from_vec(n_time, n_space, values)?)
}

/// Sidecar index of the dumps written into one directory.
pub struct DumpIndex {
    entries: Vec<(String, String, DumpShape)>,
}

impl DumpIndex {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, field: &str, file: &str, shape: DumpShape) {
        self.entries.push((field.to_string(), file.to_string(), shape));
    }

    pub fn write(&self, path: impl AsRef<Path>, time: &TimeGrid) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| CliError::io(path, e);
        writeln!(out, "field,file,n_time,nx,nz,t_final").map_err(io)?;
        for (field, name, s) in &self.entries {
            writeln!(out, "{field},{name},{},{},{},{}", s.n_time, s.nx, s.nz, num(time.t_final)).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

impl Default for DumpIndex {
    fn default() -> Self {
        Self::new()
    }
}

/// Writes a space-time field in long form `t,node,value`.
pub fn write_long(path: impl AsRef<Path>, time: &TimeGrid, f: &SpaceTime) -> Result<()> {
    let mut w = CsvWriter::create(path, &["t", "node", "value"])?;
    for n in 0..f.n_time() {
        for (i, v) in f.row(n).iter().enumerate() {
            w.row(&[&num(time.t(n)), &i.to_string()], &[*v])?;
        }
    }
    w.finish()
}
