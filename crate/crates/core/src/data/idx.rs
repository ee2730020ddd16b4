//! IDX container format: a big-endian header (two zero bytes, a type
//! code, the number of dimensions, then one `u32` extent per dimension)
//! followed by the payload.

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Magic of a one-dimensional unsigned-byte array (labels).
pub const MAGIC_LABELS: u32 = 0x0000_0801;
/// Magic of a three-dimensional unsigned-byte array (images).
pub const MAGIC_IMAGES: u32 = 0x0000_0803;

/// A parsed unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Idx { offset, msg: msg.into() }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| err(offset, format!("truncated {what}: need 4 bytes, file has {}", bytes.len())))?;
    Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

/// Parses a labels (`0x801`) or images (`0x803`) file.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0, "magic")?;
    let ndim = match magic {
        MAGIC_LABELS => 1,
        MAGIC_IMAGES => 3,
        _ => return Err(err(0, format!("unsupported magic {magic:#010x} (expected 0x00000801 or 0x00000803)"))),
    };
    let mut dims = Vec::with_capacity(ndim);
    let mut total: usize = 1;
    for i in 0..ndim {
        let off = 4 + 4 * i;
        let d = be_u32(bytes, off, "dimension")? as usize;
        total = total
            .checked_mul(d)
            .ok_or_else(|| err(off, format!("dimension product overflows at dimension {i}")))?;
        dims.push(d);
    }
    let start = 4 + 4 * ndim;
    let have = bytes.len() - start;
    if have < total {
        return Err(err(bytes.len(), format!("truncated payload: header declares {total} bytes, found {have}")));
    }
    if have > total {
        return Err(err(start + total, format!("{} unexpected trailing bytes", have - total)));
    }
    Ok(IdxArray {
        dims,
        data: bytes[start..].to_vec(),
    })
}

/// Inverse of [`parse_idx`] for one- and three-dimensional arrays.
pub fn serialize_idx(a: &IdxArray) -> Result<Vec<u8>> {
    let magic = match a.dims.len() {
        1 => MAGIC_LABELS,
        3 => MAGIC_IMAGES,
        k => return Err(Error::Invalid(format!("IDX arrays here are 1-D or 3-D, got {k} dimensions"))),
    };
    if a.dims.iter().product::<usize>() != a.data.len() {
        return Err(Error::shape("serialize_idx", &a.dims, &[a.data.len()]));
    }
    let mut out = Vec::with_capacity(4 + 4 * a.dims.len() + a.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &a.dims {
        let d = u32::try_from(d).map_err(|_| Error::Invalid(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&a.data);
    Ok(out)
}

/// Images file as an `m x (rows * cols)` tensor scaled to `[0, 1]`.
pub fn parse_images<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let a = parse_idx(bytes)?;
    if a.dims.len() != 3 {
        return Err(err(0, "expected an images file (magic 0x00000803)"));
    }
    let data = a.data.iter().map(|&b| T::lit(b as f64 / 255.0)).collect();
    Tensor::new([a.dims[0], a.dims[1] * a.dims[2]], data)
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let a = parse_idx(bytes)?;
    if a.dims.len() != 1 {
        return Err(err(0, "expected a labels file (magic 0x00000801)"));
    }
    Ok(a.data)
}
