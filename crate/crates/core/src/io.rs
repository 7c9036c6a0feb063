//! On-disk formats. All binary formats are little-endian and start with a
//! 4-byte magic followed by a `u32` version.
//!
//! Feature file (`F3RD`, version 1):
//!
//! | field    | type              |
//! |----------|-------------------|
//! | magic    | `b"F3RD"`         |
//! | version  | u32 = 1           |
//! | n        | u64               |
//! | d        | u32               |
//! | C        | u32               |
//! | features | n·d f32 row-major |
//! | labels   | n u32             |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"F3RD";
pub const FEATURE_VERSION: u32 = 1;
const FEATURE_HEADER_LEN: u64 = 4 + 4 + 8 + 4 + 4;

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn encode_features(ds: &FeatureDataset) -> Vec<u8> {
    let (n, d) = ds.features().shape();
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN as usize + n * d * 4 + n * 4);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(ds.classes() as u32).to_le_bytes());
    for &v in ds.features().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &l in ds.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

pub fn write_features(path: &Path, ds: &FeatureDataset) -> Result<()> {
    atomic_write(path, &encode_features(ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub version: u32,
    pub n: u64,
    pub dim: u32,
    pub classes: u32,
}

impl FeatureHeader {
    pub fn payload_len(&self) -> u64 {
        self.n * (u64::from(self.dim) * 4 + 4)
    }
}

pub fn decode_feature_header(bytes: &[u8]) -> Result<FeatureHeader> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(FEATURE_MAGIC)?;
    let version = r.u32()?;
    if version != FEATURE_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    Ok(FeatureHeader {
        version,
        n: r.u64()?,
        dim: r.u32()?,
        classes: r.u32()?,
    })
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureDataset> {
    let header = decode_feature_header(bytes)?;
    let expected = FEATURE_HEADER_LEN + header.payload_len();
    if bytes.len() as u64 != expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len() as u64,
        });
    }
    let n = header.n as usize;
    let d = header.dim as usize;
    let mut r = ByteReader::new(&bytes[FEATURE_HEADER_LEN as usize..]);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        data.push(f64::from(r.f32()?));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.u32()? as usize);
    }
    let features = DenseMatrix::from_vec_finite(n, d, data)?;
    FeatureDataset::new(features, labels, header.classes as usize)
}

pub fn read_features(path: &Path) -> Result<FeatureDataset> {
    decode_features(&fs::read(path)?)
}

/// Cursor over a little-endian byte buffer; running off the end is a truncation.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.buf.get(self.pos..end).ok_or(Error::TruncatedFile {
            expected: end as u64,
            found: self.buf.len() as u64,
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    pub(crate) fn expect_magic(&mut self, magic: [u8; 4]) -> Result<()> {
        if self.buf.len() < 4 {
            return Err(Error::TruncatedFile {
                expected: 4,
                found: self.buf.len() as u64,
            });
        }
        let found = self.take::<4>()?;
        if found != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found,
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}
