//! The `GWG1` stream format.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "GWG1"
//!      4     2  version (u16 LE) = 1
//!      6     1  kind: 1 SNP, 2 trait, 3 result, 4 dense operand
//!      7     1  element type: 0 = f64
//!      8    24  dims: three u64 LE (n, count, p)
//!     32     1  layout: 0 = column-major slabs
//!     33     1  status: 0 = complete, 1 = incomplete
//!     34    30  zero
//! ```
//!
//! Payload starts at byte 64 and holds little-endian IEEE-754 doubles.
//! SNP, trait and dense streams store `count` columns of `n` values. A trait
//! stream additionally appends `count` heritabilities followed by `count`
//! variance scales. A result stream uses `n = m` and `count = t` and stores
//! the `p` coefficients of cell `(i, j)` at element offset `(j·m + i)·p`.

use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::engine::ResultTile;
use crate::error::{Error, Result};
use crate::gls::TraitScalars;

pub const MAGIC: [u8; 4] = *b"GWG1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 64;
const ELEM: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Snp = 1,
    Trait = 2,
    Result = 3,
    /// In-memory operands (kinship matrix, shared covariates).
    Dense = 4,
}

impl StreamKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Snp),
            2 => Some(Self::Trait),
            3 => Some(Self::Result),
            4 => Some(Self::Dense),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub kind: StreamKind,
    /// `(n, count, p)`; `p` is zero for everything but result streams.
    pub dims: [u64; 3],
    pub complete: bool,
}

impl StreamHeader {
    pub fn snp(n: usize, m: usize) -> Self {
        Self::new(StreamKind::Snp, [n as u64, m as u64, 0])
    }

    pub fn traits(n: usize, t: usize) -> Self {
        Self::new(StreamKind::Trait, [n as u64, t as u64, 0])
    }

    pub fn result(m: usize, t: usize, p: usize) -> Self {
        Self::new(StreamKind::Result, [m as u64, t as u64, p as u64])
    }

    pub fn dense(rows: usize, cols: usize) -> Self {
        Self::new(StreamKind::Dense, [rows as u64, cols as u64, 0])
    }

    fn new(kind: StreamKind, dims: [u64; 3]) -> Self {
        Self {
            kind,
            dims,
            complete: false,
        }
    }

    /// Number of f64 elements in the payload.
    pub fn payload_elements(&self) -> u64 {
        let [n, count, p] = self.dims;
        match self.kind {
            StreamKind::Snp | StreamKind::Dense => n * count,
            StreamKind::Trait => n * count + 2 * count,
            StreamKind::Result => n * count * p,
        }
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN + self.payload_elements() * ELEM
    }

    pub fn encode(&self) -> [u8; 64] {
        let mut buf = [0u8; 64];
        buf[0..4].copy_from_slice(&MAGIC);
        buf[4..6].copy_from_slice(&VERSION.to_le_bytes());
        buf[6] = self.kind as u8;
        buf[7] = 0;
        for (k, d) in self.dims.iter().enumerate() {
            buf[8 + 8 * k..16 + 8 * k].copy_from_slice(&d.to_le_bytes());
        }
        buf[32] = 0;
        buf[33] = if self.complete { 0 } else { 1 };
        buf
    }

    pub fn decode(buf: &[u8; 64], path: &Path) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&buf[0..4]);
        if magic != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                found: magic,
            });
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                expected: VERSION,
            });
        }
        let kind = StreamKind::from_byte(buf[6]).ok_or_else(|| malformed("unknown stream kind"))?;
        if buf[7] != 0 {
            return Err(malformed("unsupported element type"));
        }
        let mut dims = [0u64; 3];
        for (k, d) in dims.iter_mut().enumerate() {
            let mut b = [0u8; 8];
            b.copy_from_slice(&buf[8 + 8 * k..16 + 8 * k]);
            *d = u64::from_le_bytes(b);
        }
        if buf[32] != 0 {
            return Err(malformed("unsupported layout"));
        }
        let complete = match buf[33] {
            0 => true,
            1 => false,
            _ => return Err(malformed("bad status byte")),
        };
        let positive = match kind {
            StreamKind::Result => dims.iter().all(|&d| d > 0),
            // a dense operand may legitimately have zero columns (p = 1)
            StreamKind::Dense => dims[0] > 0,
            _ => dims[0] > 0 && dims[1] > 0,
        };
        if !positive {
            return Err(malformed("dimensions must be strictly positive"));
        }
        Ok(Self {
            kind,
            dims,
            complete,
        })
    }
}

fn to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn from_bytes(bytes: &[u8], out: &mut [f64]) {
    for (dst, chunk) in out.iter_mut().zip(bytes.chunks_exact(8)) {
        *dst = f64::from_le_bytes(chunk.try_into().unwrap());
    }
}

/// Read handle on a `GWG1` file. Reads are positional, so one handle may
/// serve concurrent readers at disjoint offsets.
#[derive(Debug)]
pub struct StreamReader {
    path: PathBuf,
    file: File,
    header: StreamHeader,
}

/// Opens a stream and validates its header, kind and length.
pub fn open_stream(path: impl AsRef<Path>, expected: StreamKind) -> Result<StreamReader> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, 0, e))?;
    let actual = file.metadata().map_err(|e| Error::io(path, 0, e))?.len();
    if actual < HEADER_LEN {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            actual,
        });
    }
    let mut buf = [0u8; 64];
    file.read_exact_at(&mut buf, 0).map_err(|e| Error::io(path, 0, e))?;
    let header = StreamHeader::decode(&buf, path)?;
    if header.kind != expected {
        return Err(Error::KindMismatch {
            path: path.to_path_buf(),
            found: header.kind as u8,
            expected: expected as u8,
        });
    }
    let expected_len = header.file_len();
    if actual < expected_len {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: expected_len,
            actual,
        });
    }
    if actual > expected_len {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after payload", actual - expected_len),
        });
    }
    Ok(StreamReader {
        path: path.to_path_buf(),
        file,
        header,
    })
}

impl StreamReader {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Rows per column (`n`, or `m` for result streams).
    pub fn n(&self) -> usize {
        self.header.dims[0] as usize
    }

    /// Number of columns (`m` SNPs, `t` traits, ...).
    pub fn count(&self) -> usize {
        self.header.dims[1] as usize
    }

    pub fn p(&self) -> usize {
        self.header.dims[2] as usize
    }

    fn read_elements(&self, element_offset: u64, out: &mut [f64]) -> Result<u64> {
        let offset = HEADER_LEN + element_offset * ELEM;
        let mut bytes = vec![0u8; out.len() * 8];
        self.file
            .read_exact_at(&mut bytes, offset)
            .map_err(|e| Error::io(&self.path, offset, e))?;
        from_bytes(&bytes, out);
        Ok(bytes.len() as u64)
    }

    fn check_columns(&self, start: usize, width: usize) -> Result<()> {
        if width == 0 || start + width > self.count() {
            return Err(Error::InvalidParameter(format!(
                "{}: column range {start}..{} outside 0..{}",
                self.path.display(),
                start + width,
                self.count()
            )));
        }
        Ok(())
    }

    /// Reads `width` consecutive columns into `out` (length `n·width`).
    /// Returns the number of bytes transferred.
    pub fn read_columns_into(&self, start: usize, width: usize, out: &mut [f64]) -> Result<u64> {
        if self.header.kind == StreamKind::Result {
            return Err(Error::InvalidParameter("use read_cell on result streams".into()));
        }
        self.check_columns(start, width)?;
        let n = self.n();
        if out.len() != n * width {
            return Err(Error::DimensionMismatch(format!(
                "slab buffer holds {} values, need {}",
                out.len(),
                n * width
            )));
        }
        self.read_elements((start * n) as u64, out)
    }

    /// Reads a slab of `width` columns starting at `start`.
    pub fn read_slab(&self, start: usize, width: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n() * width.min(self.count())];
        self.read_columns_into(start, width, &mut out)?;
        Ok(out)
    }

    /// Reads the heritability/variance pairs of traits `start..start+width`.
    pub fn read_scalars(&self, start: usize, width: usize) -> Result<(Vec<TraitScalars>, u64)> {
        if self.header.kind != StreamKind::Trait {
            return Err(Error::InvalidParameter("only trait streams carry scalars".into()));
        }
        self.check_columns(start, width)?;
        let base = (self.n() * self.count()) as u64;
        let mut h2 = vec![0.0; width];
        let mut sigma2 = vec![0.0; width];
        let mut bytes = self.read_elements(base + start as u64, &mut h2)?;
        bytes += self.read_elements(base + (self.count() + start) as u64, &mut sigma2)?;
        let scalars = h2
            .into_iter()
            .zip(sigma2)
            .map(|(h, s)| TraitScalars::new(h, s))
            .collect::<Result<Vec<_>>>()?;
        Ok((scalars, bytes))
    }

    /// Reads the coefficients of result cell `(snp, trait_index)`.
    pub fn read_cell(&self, snp: usize, trait_index: usize) -> Result<Vec<f64>> {
        if self.header.kind != StreamKind::Result {
            return Err(Error::InvalidParameter("read_cell requires a result stream".into()));
        }
        if !self.header.complete {
            return Err(Error::IncompleteStream {
                path: self.path.clone(),
            });
        }
        let (m, t, p) = (self.n(), self.count(), self.p());
        if snp >= m || trait_index >= t {
            return Err(Error::InvalidParameter(format!(
                "cell ({snp}, {trait_index}) outside {m}x{t} grid"
            )));
        }
        let mut out = vec![0.0; p];
        self.read_elements(((trait_index * m + snp) * p) as u64, &mut out)?;
        Ok(out)
    }

    /// Loads a whole dense operand.
    pub fn read_dense(&self) -> Result<DMatrix<f64>> {
        if self.header.kind != StreamKind::Dense {
            return Err(Error::InvalidParameter("read_dense requires a dense stream".into()));
        }
        let mut data = vec![0.0; self.n() * self.count()];
        self.read_elements(0, &mut data)?;
        Ok(DMatrix::from_vec(self.n(), self.count(), data))
    }
}

/// Write handle on a `GWG1` file.
///
/// A new file is created with its header marked incomplete and its full
/// length reserved; [`StreamWriter::finish`] flips the status once every
/// region has been written. Handles must not be shared for concurrent
/// writes; use [`StreamWriter::reopen`] to get an independent handle.
#[derive(Debug)]
pub struct StreamWriter {
    path: PathBuf,
    file: File,
    header: StreamHeader,
}

impl StreamWriter {
    pub fn create(path: impl AsRef<Path>, header: StreamHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, 0, e))?;
        let header = StreamHeader {
            complete: false,
            ..header
        };
        file.write_all_at(&header.encode(), 0)
            .map_err(|e| Error::io(&path, 0, e))?;
        file.set_len(header.file_len())
            .map_err(|e| Error::io(&path, header.file_len(), e))?;
        Ok(Self { path, file, header })
    }

    /// Opens an existing stream for overwriting in place. The header is
    /// left untouched.
    pub fn reopen(path: impl AsRef<Path>, expected: StreamKind) -> Result<Self> {
        let reader = open_stream(&path, expected)?;
        let header = *reader.header();
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, 0, e))?;
        Ok(Self { path, file, header })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_elements(&self, element_offset: u64, values: &[f64]) -> Result<u64> {
        let offset = HEADER_LEN + element_offset * ELEM;
        let bytes = to_bytes(values);
        self.file
            .write_all_at(&bytes, offset)
            .map_err(|e| Error::io(&self.path, offset, e))?;
        Ok(bytes.len() as u64)
    }

    /// Writes whole columns starting at column `start`.
    pub fn write_columns(&self, start: usize, values: &[f64]) -> Result<u64> {
        let n = self.header.dims[0] as usize;
        let count = self.header.dims[1] as usize;
        if self.header.kind == StreamKind::Result || values.len() % n != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values are not whole columns of length {n}",
                values.len()
            )));
        }
        if start + values.len() / n > count {
            return Err(Error::InvalidParameter(format!(
                "columns {start}..{} outside 0..{count}",
                start + values.len() / n
            )));
        }
        self.write_elements((start * n) as u64, values)
    }

    pub fn write_scalars(&self, start: usize, scalars: &[TraitScalars]) -> Result<u64> {
        if self.header.kind != StreamKind::Trait {
            return Err(Error::InvalidParameter("only trait streams carry scalars".into()));
        }
        let n = self.header.dims[0];
        let count = self.header.dims[1];
        if start as u64 + scalars.len() as u64 > count {
            return Err(Error::InvalidParameter("scalar range outside stream".into()));
        }
        let base = n * count;
        let h2: Vec<f64> = scalars.iter().map(|s| s.h2).collect();
        let sigma2: Vec<f64> = scalars.iter().map(|s| s.sigma2).collect();
        let mut bytes = self.write_elements(base + start as u64, &h2)?;
        bytes += self.write_elements(base + count + start as u64, &sigma2)?;
        Ok(bytes)
    }

    /// Writes a result tile at its grid position: one contiguous run of
    /// `rows·p` values per trait column.
    pub fn write_result_tile(&self, tile: &ResultTile) -> Result<u64> {
        let [m, t, p] = self.header.dims;
        if self.header.kind != StreamKind::Result {
            return Err(Error::InvalidParameter("tiles go to result streams".into()));
        }
        let (i0, j0) = tile.origin;
        if tile.p as u64 != p
            || tile.rows == 0
            || tile.cols == 0
            || (i0 + tile.rows) as u64 > m
            || (j0 + tile.cols) as u64 > t
        {
            return Err(Error::InvalidParameter(format!(
                "tile at ({i0}, {j0}) of shape {}x{}x{} does not fit a {m}x{t}x{p} result",
                tile.rows, tile.cols, tile.p
            )));
        }
        let run = tile.rows * tile.p;
        let mut bytes = 0;
        for (jj, column) in tile.data.chunks_exact(run).enumerate() {
            let element = ((j0 + jj) as u64 * m + i0 as u64) * p;
            bytes += self.write_elements(element, column)?;
        }
        Ok(bytes)
    }

    /// Marks the stream complete.
    pub fn finish(mut self) -> Result<()> {
        self.header.complete = true;
        self.file
            .write_all_at(&self.header.encode(), 0)
            .map_err(|e| Error::io(&self.path, 0, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, 0, e))
    }
}

/// Writes a dense column-major matrix as a complete kind-4 stream.
pub fn write_dense(path: impl AsRef<Path>, matrix: &DMatrix<f64>) -> Result<()> {
    let w = StreamWriter::create(path, StreamHeader::dense(matrix.nrows(), matrix.ncols()))?;
    if matrix.ncols() > 0 {
        w.write_columns(0, matrix.as_slice())?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let h = StreamHeader::snp(4, 10);
        let b = h.encode();
        assert_eq!(&b[0..4], b"GWG1");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(b[7], 0);
        assert_eq!(&b[8..16], &4u64.to_le_bytes());
        assert_eq!(&b[16..24], &10u64.to_le_bytes());
        assert_eq!(&b[24..32], &0u64.to_le_bytes());
        assert_eq!(b[32], 0);
        assert_eq!(b[33], 1);
        assert!(b[34..].iter().all(|&x| x == 0));
        let back = StreamHeader::decode(&b, Path::new("x")).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn file_lengths() {
        assert_eq!(StreamHeader::snp(4, 3).file_len(), 64 + 12 * 8);
        assert_eq!(StreamHeader::traits(4, 2).file_len(), 64 + (8 + 4) * 8);
        assert_eq!(StreamHeader::result(5, 3, 4).file_len(), 64 + 60 * 8);
    }

    #[test]
    fn decode_rejects_bad_fields() {
        let p = Path::new("f");
        let mut b = StreamHeader::snp(2, 2).encode();
        b[0] = b'X';
        assert!(matches!(StreamHeader::decode(&b, p), Err(Error::BadMagic { .. })));
        let mut b = StreamHeader::snp(2, 2).encode();
        b[4] = 9;
        assert!(matches!(StreamHeader::decode(&b, p), Err(Error::VersionMismatch { found: 9, .. })));
        let b = StreamHeader::snp(0, 2).encode();
        assert!(matches!(StreamHeader::decode(&b, p), Err(Error::MalformedHeader { .. })));
    }
}
