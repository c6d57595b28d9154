//! Node sources: CSV and binary files, rejection-sampled generators, and
//! in-memory vectors. Sources replay identically when reopened, which is
//! what makes two-pass verification possible.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// One support point: coordinates, positive weight, and the 1-based global
/// index encoding the stream ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub coords: Vec<f64>,
    pub weight: f64,
    pub global_index: u64,
}

/// Pull-based ordered source of nodes.
pub trait NodeStream {
    fn dim(&self) -> usize;
    fn len_hint(&self) -> Option<u64> {
        None
    }
    fn next_node(&mut self) -> Result<Option<Node>>;
}

/// A re-openable provider of node streams. Every `open` replays the same
/// ordered sequence.
pub trait NodeSource: Send + Sync {
    fn dim(&self) -> usize;
    fn open(&self) -> Result<Box<dyn NodeStream + '_>>;
}

// ---------------------------------------------------------------------------
// in-memory

/// Stream over an owned vector of (coords, weight) pairs; test helper and
/// backing for dense inputs.
pub struct VecStream {
    dim: usize,
    items: std::vec::IntoIter<(Vec<f64>, f64)>,
    len: u64,
    next_index: u64,
}

impl VecStream {
    pub fn new(dim: usize, items: Vec<(Vec<f64>, f64)>) -> Self {
        let len = items.len() as u64;
        Self { dim, items: items.into_iter(), len, next_index: 1 }
    }
}

impl NodeStream for VecStream {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.len)
    }

    fn next_node(&mut self) -> Result<Option<Node>> {
        Ok(self.items.next().map(|(coords, weight)| {
            let global_index = self.next_index;
            self.next_index += 1;
            Node { coords, weight, global_index }
        }))
    }
}

/// Re-openable in-memory source.
#[derive(Clone)]
pub struct VecSource {
    dim: usize,
    items: Arc<Vec<(Vec<f64>, f64)>>,
}

impl VecSource {
    pub fn new(dim: usize, items: Vec<(Vec<f64>, f64)>) -> Self {
        Self { dim, items: Arc::new(items) }
    }

    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        let items = m
            .nodes()
            .iter()
            .cloned()
            .zip(m.weights().iter().copied())
            .collect();
        Self::new(m.dim(), items)
    }
}

impl NodeSource for VecSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn open(&self) -> Result<Box<dyn NodeStream + '_>> {
        Ok(Box::new(VecStream::new(self.dim, self.items.as_ref().clone())))
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Streaming reader for `x1,...,xd,w` CSV files.
pub struct CsvStream {
    dim: usize,
    reader: BufReader<File>,
    line: usize,
    next_index: u64,
    buf: String,
}

/// Open a CSV node file and validate its header.
pub fn stream_from_csv(path: &Path, dim: usize) -> Result<CsvStream> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let expected = csv_header(dim);
    if header.trim() != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header '{}' does not match '{expected}'", header.trim()),
        });
    }
    Ok(CsvStream { dim, reader, line: 1, next_index: 1, buf: String::new() })
}

fn csv_header(dim: usize) -> String {
    let mut h: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    h.push("w".into());
    h.join(",")
}

impl NodeStream for CsvStream {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_node(&mut self) -> Result<Option<Node>> {
        loop {
            self.buf.clear();
            if self.reader.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != self.dim + 1 {
                return Err(Error::Parse {
                    line: self.line,
                    msg: format!("{} fields, expected {}", fields.len(), self.dim + 1),
                });
            }
            let mut coords = Vec::with_capacity(self.dim);
            for f in &fields[..self.dim] {
                coords.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: self.line,
                    msg: format!("'{f}': {e}"),
                })?);
            }
            let weight: f64 = fields[self.dim].trim().parse().map_err(|e| Error::Parse {
                line: self.line,
                msg: format!("'{}': {e}", fields[self.dim]),
            })?;
            if !(weight > 0.0) {
                return Err(Error::NonPositiveWeight { line: self.line, value: weight });
            }
            let global_index = self.next_index;
            self.next_index += 1;
            return Ok(Some(Node { coords, weight, global_index }));
        }
    }
}

pub struct CsvSource {
    path: PathBuf,
    dim: usize,
}

impl CsvSource {
    pub fn new(path: impl Into<PathBuf>, dim: usize) -> Self {
        Self { path: path.into(), dim }
    }
}

impl NodeSource for CsvSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn open(&self) -> Result<Box<dyn NodeStream + '_>> {
        Ok(Box::new(stream_from_csv(&self.path, self.dim)?))
    }
}

/// Write a rule as CSV with shortest round-trip decimal formatting.
pub fn write_rule_csv(path: &Path, m: &DiscreteMeasure) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", csv_header(m.dim()))?;
    for (x, wt) in m.nodes().iter().zip(m.weights()) {
        for c in x {
            write!(w, "{c},")?;
        }
        writeln!(w, "{wt}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read an entire CSV rule into a measure (for `compare` and tests).
pub fn read_rule_csv(path: &Path, dim: usize) -> Result<DiscreteMeasure> {
    let mut s = stream_from_csv(path, dim)?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    while let Some(node) = s.next_node()? {
        nodes.push(node.coords);
        weights.push(node.weight);
    }
    DiscreteMeasure::new(dim, nodes, weights)
}

// ---------------------------------------------------------------------------
// binary (magic QPN1, little-endian)

pub const BINARY_MAGIC: &[u8; 4] = b"QPN1";

/// Streaming reader for the binary node format: magic `QPN1`, u32 dim,
/// u64 count, then `count` records of dim+1 little-endian f64 values.
pub struct BinaryStream {
    dim: usize,
    count: u64,
    read: u64,
    offset: u64,
    reader: BufReader<File>,
}

pub fn stream_from_binary(path: &Path) -> Result<BinaryStream> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::TruncatedFile(0))?;
    if &magic != BINARY_MAGIC {
        return Err(Error::BadMagic);
    }
    let mut b4 = [0u8; 4];
    reader.read_exact(&mut b4).map_err(|_| Error::TruncatedFile(4))?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    reader.read_exact(&mut b8).map_err(|_| Error::TruncatedFile(8))?;
    let count = u64::from_le_bytes(b8);
    if dim == 0 {
        return Err(Error::Parse { line: 0, msg: "binary header has dim = 0".into() });
    }
    Ok(BinaryStream { dim, count, read: 0, offset: 16, reader })
}

impl BinaryStream {
    pub fn count(&self) -> u64 {
        self.count
    }
}

impl NodeStream for BinaryStream {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.count)
    }

    fn next_node(&mut self) -> Result<Option<Node>> {
        if self.read == self.count {
            return Ok(None);
        }
        let mut coords = Vec::with_capacity(self.dim);
        let mut b8 = [0u8; 8];
        for _ in 0..self.dim {
            self.reader
                .read_exact(&mut b8)
                .map_err(|_| Error::TruncatedFile(self.offset))?;
            self.offset += 8;
            coords.push(f64::from_le_bytes(b8));
        }
        self.reader
            .read_exact(&mut b8)
            .map_err(|_| Error::TruncatedFile(self.offset))?;
        self.offset += 8;
        let weight = f64::from_le_bytes(b8);
        self.read += 1;
        Ok(Some(Node { coords, weight, global_index: self.read }))
    }
}

pub struct BinarySource {
    path: PathBuf,
    dim: usize,
}

impl BinarySource {
    pub fn new(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let dim = stream_from_binary(&path)?.dim();
        Ok(Self { path, dim })
    }
}

impl NodeSource for BinarySource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn open(&self) -> Result<Box<dyn NodeStream + '_>> {
        Ok(Box::new(stream_from_binary(&self.path)?))
    }
}

/// Write nodes in the binary format.
pub fn write_binary(path: &Path, dim: usize, records: &[(Vec<f64>, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (x, wt) in records {
        for c in x {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&wt.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rejection-sampled generators

/// Deterministic membership predicate over a bounding box.
#[derive(Clone)]
pub enum Indicator {
    /// The whole bounding box.
    Box,
    Disk { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, r_inner: f64, r_outer: f64 },
    UnionOfDisks(Vec<(Vec<f64>, f64)>),
    /// Torus-like shell in 3D: (sqrt(x^2+y^2) - major)^2 + z^2 <= minor^2.
    Shell { major: f64, minor: f64 },
    Callback(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

#[derive(Clone)]
pub struct DomainSpec {
    pub bounds: Vec<(f64, f64)>,
    pub indicator: Indicator,
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let sq = |c: &[f64]| -> f64 {
            x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        match &self.indicator {
            Indicator::Box => true,
            Indicator::Disk { center, radius } => sq(center) <= radius * radius,
            Indicator::Annulus { center, r_inner, r_outer } => {
                let d2 = sq(center);
                d2 >= r_inner * r_inner && d2 <= r_outer * r_outer
            }
            Indicator::UnionOfDisks(disks) => disks.iter().any(|(c, r)| sq(c) <= r * r),
            Indicator::Shell { major, minor } => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                (rho - major).powi(2) + x[2] * x[2] <= minor * minor
            }
            Indicator::Callback(f) => f(x),
        }
    }

    /// Unit disk inside [-1,1]^2.
    pub fn unit_disk() -> Self {
        DomainSpec {
            bounds: vec![(-1.0, 1.0); 2],
            indicator: Indicator::Disk { center: vec![0.0, 0.0], radius: 1.0 },
        }
    }

    pub fn unit_box(d: usize) -> Self {
        DomainSpec { bounds: vec![(-1.0, 1.0); d], indicator: Indicator::Box }
    }
}

const MAX_CONSECUTIVE_REJECTS: u64 = 10_000_000;

/// Stream of exactly `count` uniform-weight (1/count) points accepted by
/// the domain indicator; constant memory and deterministic per seed.
pub struct RejectionStream {
    domain: DomainSpec,
    count: u64,
    emitted: u64,
    rng: ChaCha8Rng,
}

pub fn rejection_sampler(domain: DomainSpec, count: u64, seed: u64) -> RejectionStream {
    RejectionStream { domain, count, emitted: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
}

impl NodeStream for RejectionStream {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.count)
    }

    fn next_node(&mut self) -> Result<Option<Node>> {
        if self.emitted == self.count {
            return Ok(None);
        }
        let d = self.domain.dim();
        let mut rejects: u64 = 0;
        loop {
            let mut x = Vec::with_capacity(d);
            for (lo, hi) in &self.domain.bounds {
                x.push(self.rng.gen_range(*lo..*hi));
            }
            if self.domain.contains(&x) {
                self.emitted += 1;
                return Ok(Some(Node {
                    coords: x,
                    weight: 1.0 / self.count as f64,
                    global_index: self.emitted,
                }));
            }
            rejects += 1;
            if rejects >= MAX_CONSECUTIVE_REJECTS {
                return Err(Error::AcceptanceTooLow(rejects));
            }
        }
    }
}

#[derive(Clone)]
pub struct GeneratorSource {
    pub domain: DomainSpec,
    pub count: u64,
    pub seed: u64,
}

impl NodeSource for GeneratorSource {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn open(&self) -> Result<Box<dyn NodeStream + '_>> {
        Ok(Box::new(rejection_sampler(self.domain.clone(), self.count, self.seed)))
    }
}
