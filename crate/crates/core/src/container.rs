//! The URK1 array container: the on-disk format for datasets, checkpoints,
//! and any other named-array bundle.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "URK1"                      4-byte ASCII magic
//! u32    array count
//! per array:
//!   u16    name length
//!   bytes  UTF-8 name
//!   u8     ndims
//!   u64×ndims  dims
//!   f64×prod(dims)  row-major IEEE-754 payload
//! ```
//!
//! Scalars are stored as 1×1 arrays. `load(save(x)) == x` bit-exactly; the
//! loader rejects bad magic, truncation, duplicate names, and non-finite
//! payloads with a clean error, never a panic.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"URK1";

/// One named array: explicit dims (so empty arrays are representable) plus
/// the row-major payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn scalar(v: f64) -> Array {
        Array {
            dims: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn from_matrix(m: &Matrix) -> Array {
        Array {
            dims: vec![m.rows() as u64, m.cols() as u64],
            data: m.as_slice().to_vec(),
        }
    }

    /// 2-D array with positive dims as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.dims.len() != 2 {
            return Err(Error::Container(format!(
                "expected a 2-D array, got {} dims",
                self.dims.len()
            )));
        }
        Matrix::new(self.dims[0] as usize, self.dims[1] as usize, self.data.clone())
    }

    pub fn to_scalar(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Container(format!(
                "expected a scalar, got {} entries",
                self.data.len()
            )));
        }
        Ok(self.data[0])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of uniquely named arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    entries: Vec<(String, Array)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, array: Array) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Container(format!("duplicate array name '{name}'")));
        }
        if !array.data.iter().all(|v| v.is_finite()) {
            return Err(Error::Container(format!(
                "array '{name}' contains non-finite entries"
            )));
        }
        let expected: u64 = array.dims.iter().product();
        if expected != array.data.len() as u64 {
            return Err(Error::Container(format!(
                "array '{name}' dims/payload mismatch"
            )));
        }
        self.entries.push((name.to_string(), array));
        Ok(())
    }

    pub fn push_matrix(&mut self, name: &str, m: &Matrix) -> Result<()> {
        self.push(name, Array::from_matrix(m))
    }

    pub fn push_scalar(&mut self, name: &str, v: f64) -> Result<()> {
        self.push(name, Array::scalar(v))
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn require(&self, name: &str) -> Result<&Array> {
        self.get(name)
            .ok_or_else(|| Error::Container(format!("missing array '{name}'")))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        self.require(name)?.to_matrix()
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.require(name)?.to_scalar()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes to the byte format above.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, array) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(array.dims.len() as u8);
            for d in &array.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &array.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses the byte format, validating every length before reading.
    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4)?;
        if magic != MAGIC {
            return Err(Error::Container("bad magic, not a URK1 file".into()));
        }
        let count = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
        let mut container = Container::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(cursor.take(2)?.try_into().unwrap()) as usize;
            let name_bytes = cursor.take(name_len)?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| Error::Container("array name is not UTF-8".into()))?
                .to_string();
            let ndims = cursor.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                dims.push(u64::from_le_bytes(cursor.take(8)?.try_into().unwrap()));
            }
            let total = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d));
            let total = total.ok_or_else(|| Error::Container("dims overflow".into()))? as usize;
            // Guard against bogus huge counts before allocating.
            if total.checked_mul(8).is_none_or(|b| b > bytes.len()) {
                return Err(Error::Container(format!(
                    "array '{name}' payload exceeds file size"
                )));
            }
            let mut data = Vec::with_capacity(total);
            for _ in 0..total {
                let v = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::Container(format!(
                        "array '{name}' contains non-finite entries"
                    )));
                }
                data.push(v);
            }
            container.push(&name, Array { dims, data })?;
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Container(format!(
                "{} trailing bytes after the last array",
                bytes.len() - cursor.pos
            )));
        }
        Ok(container)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Container> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Container(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// FNV-1a over a byte stream; used for config hashes and golden checksums.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Checksum of a matrix's exact bit pattern, row-major.
pub fn matrix_checksum(m: &Matrix) -> u64 {
    let mut bytes = Vec::with_capacity(m.as_slice().len() * 8);
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a64(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_container_is_eight_bytes() {
        let c = Container::new();
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), 8);
        assert_eq!(&bytes[0..4], b"URK1");
        assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut c = Container::new();
        let m = Matrix::from_rows(&[&[1.5, -2.25], &[1e-300, 4.0]]);
        c.push_matrix("weights", &m).unwrap();
        c.push_scalar("seed", 42.0).unwrap();
        c.push(
            "empty",
            Array {
                dims: vec![3, 0],
                data: vec![],
            },
        )
        .unwrap();
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.matrix("weights").unwrap(), m);
        assert_eq!(back.scalar("seed").unwrap(), 42.0);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut c = Container::new();
        c.push_scalar("x", 1.0).unwrap();
        assert!(c.push_scalar("x", 2.0).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = Container::new().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(Error::Container(_))
        ));
    }

    #[test]
    fn every_truncation_errors_cleanly() {
        let mut c = Container::new();
        c.push_matrix("a", &Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]))
            .unwrap();
        c.push_scalar("b", -7.5).unwrap();
        let bytes = c.to_bytes();
        for cut in 0..bytes.len() {
            let res = Container::from_bytes(&bytes[..cut]);
            assert!(res.is_err(), "truncation at {cut} must fail");
        }
        assert!(Container::from_bytes(&bytes).is_ok());
    }

    #[test]
    fn corrupt_lengths_do_not_overallocate() {
        let mut c = Container::new();
        c.push_scalar("x", 1.0).unwrap();
        let mut bytes = c.to_bytes();
        // inflate the first dim to a huge value
        let dim_offset = 4 + 4 + 2 + 1 + 1;
        bytes[dim_offset..dim_offset + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(Container::from_bytes(&bytes).is_err());
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut bytes = Container::new().to_bytes();
        bytes.push(0);
        assert!(Container::from_bytes(&bytes).is_err());
    }

    #[test]
    fn fnv_vector() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
