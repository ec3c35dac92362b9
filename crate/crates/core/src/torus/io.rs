//! GPXF binary field files.
//!
//! Layout (little endian): magic `GPXF`, u32 version, u32 x3 counts,
//! f64 x3 side lengths, u32 kind, then the f64 payload in node order.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex;

use super::field::{ComplexField, RealField, VecField};
use super::grid::TorusGrid;
use crate::error::{GpxError, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"GPXF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 24 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum FieldKind {
    Real = 1,
    Complex = 2,
    Vector = 3,
}

impl FieldKind {
    fn width(self) -> usize {
        match self {
            FieldKind::Real => 1,
            FieldKind::Complex => 2,
            FieldKind::Vector => 3,
        }
    }

    fn from_u32(v: u32) -> Result<Self> {
        match v {
            1 => Ok(FieldKind::Real),
            2 => Ok(FieldKind::Complex),
            3 => Ok(FieldKind::Vector),
            _ => Err(GpxError::Format(format!("unknown kind {v}"))),
        }
    }
}

/// A decoded file of any kind.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyField<S = f64> {
    Real(RealField<S>),
    Complex(ComplexField<S>),
    Vector(VecField<S>),
}

fn encode<S: Scalar>(grid: &TorusGrid<S>, kind: FieldKind, payload: impl Iterator<Item = S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * kind.width() * grid.node_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in grid.counts() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in grid.lengths() {
        out.extend_from_slice(&l.to_f64_lossy().to_le_bytes());
    }
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

pub fn encode_real<S: Scalar>(f: &RealField<S>) -> Vec<u8> {
    encode(f.grid(), FieldKind::Real, f.data().iter().copied())
}

pub fn encode_complex<S: Scalar>(f: &ComplexField<S>) -> Vec<u8> {
    encode(f.grid(), FieldKind::Complex, f.data().iter().flat_map(|z| [z.re, z.im]))
}

pub fn encode_vector<S: Scalar>(f: &VecField<S>) -> Vec<u8> {
    encode(f.grid(), FieldKind::Vector, f.data().iter().flat_map(|v| *v))
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<AnyField<S>> {
    if bytes.len() < HEADER_LEN {
        return Err(GpxError::Format("truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(GpxError::Format("bad magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(GpxError::Format(format!("unsupported version {version}")));
    }
    let n = [u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize, u32_at(bytes, 16) as usize];
    let len = [f64_at(bytes, 20), f64_at(bytes, 28), f64_at(bytes, 36)];
    let kind = FieldKind::from_u32(u32_at(bytes, 44))?;
    let grid = TorusGrid::new(n, len.map(S::lit))?;
    let count = grid.node_count() * kind.width();
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(GpxError::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len() - HEADER_LEN,
            8 * count
        )));
    }
    let vals: Vec<S> = (0..count).map(|i| S::lit(f64_at(bytes, HEADER_LEN + 8 * i))).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(GpxError::Format("non-finite sample".into()));
    }
    Ok(match kind {
        FieldKind::Real => AnyField::Real(RealField::from_vec(grid, vals)?),
        FieldKind::Complex => AnyField::Complex(ComplexField::from_vec(
            grid,
            vals.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect(),
        )?),
        FieldKind::Vector => {
            AnyField::Vector(VecField::from_vec(grid, vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())?)
        }
    })
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| GpxError::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_any<S: Scalar>(path: &Path) -> Result<AnyField<S>> {
    decode(&fs::read(path)?)
}

pub fn read_complex<S: Scalar>(path: &Path) -> Result<ComplexField<S>> {
    match read_any(path)? {
        AnyField::Complex(u) => Ok(u),
        _ => Err(GpxError::Format(format!("{} does not hold a complex field", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_all_kinds() {
        let g = TorusGrid::<f64>::new([16, 18, 16], [1.0, 2.0, 0.5]).unwrap();
        let r = RealField::from_index_fn(g, |i| i as f64 * 0.25 - 3.0);
        let c = ComplexField::from_index_fn(g, |i| Complex::new(i as f64, -(i as f64) / 7.0));
        let v = VecField::from_index_fn(g, |i| [i as f64, 1.0, -2.5]);
        assert_eq!(decode::<f64>(&encode_real(&r)).unwrap(), AnyField::Real(r));
        assert_eq!(decode::<f64>(&encode_complex(&c)).unwrap(), AnyField::Complex(c));
        assert_eq!(decode::<f64>(&encode_vector(&v)).unwrap(), AnyField::Vector(v));
    }

    #[test]
    fn header_layout() {
        let g = TorusGrid::<f64>::new([16, 18, 20], [1.0, 2.0, 3.0]).unwrap();
        let b = encode_real(&RealField::zeros(g));
        assert_eq!(&b[0..4], b"GPXF");
        assert_eq!(u32_at(&b, 4), 1);
        assert_eq!([u32_at(&b, 8), u32_at(&b, 12), u32_at(&b, 16)], [16, 18, 20]);
        assert_eq!(f64_at(&b, 36), 3.0);
        assert_eq!(u32_at(&b, 44), 1);
        assert_eq!(b.len(), 48 + 8 * 16 * 18 * 20);
    }

    #[test]
    fn rejects_bad_input() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let mut b = encode_real(&RealField::zeros(g));
        assert!(decode::<f64>(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(decode::<f64>(&b).is_err());
    }

    #[test]
    fn atomic_write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.gpxf");
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let c = ComplexField::constant(g, Complex::new(0.6, 0.8));
        write_atomic(&p, &encode_complex(&c)).unwrap();
        assert_eq!(read_complex::<f64>(&p).unwrap(), c);
    }
}
