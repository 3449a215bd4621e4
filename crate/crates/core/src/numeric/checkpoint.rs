//! Flat named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "VRDCKPT\0"
//! version    u32       currently 1
//! meta_len   u32       followed by meta_len bytes of UTF-8 (free-form, JSON by convention)
//! count      u32       number of tensors
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, ndim x u64 dims
//!   values   product(dims) x f64
//! ```

use std::io::{Read, Write};

use super::{NumericError, ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"VRDCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub params: ParamSet,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(meta: &str, params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, meta.len() as u32);
    out.extend_from_slice(meta.as_bytes());
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NumericError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumericError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NumericError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NumericError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| NumericError::Checkpoint("invalid UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, NumericError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(NumericError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(NumericError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let meta = c.string()?;
    let count = c.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = c.string()?;
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| {
            NumericError::Checkpoint(format!("{name}: shape overflow"))
        })?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        params.add(name, Tensor::new(shape, data)?);
    }
    if c.pos != bytes.len() {
        return Err(NumericError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(Checkpoint { meta, params })
}

pub fn write<W: Write>(w: &mut W, meta: &str, params: &ParamSet) -> std::io::Result<()> {
    w.write_all(&encode(meta, params))
}

pub fn read<R: Read>(r: &mut R) -> Result<Checkpoint, NumericError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| NumericError::Checkpoint(e.to_string()))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::scalar(1.5));
        let bytes = encode("{}", &ps);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        // value is the last 8 bytes
        assert_eq!(&bytes[bytes.len() - 8..], &1.5f64.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::vector(vec![1.0, 2.0]));
        let bytes = encode("m", &ps);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e6..1e6f64, 1..40), meta in "[a-z{}:\" ]{0,20}") {
            let mut ps = ParamSet::new();
            ps.add("layer.weight", Tensor::vector(values.clone()));
            ps.add("layer.bias", Tensor::matrix(1, 1, vec![values[0]]).unwrap());
            let ck = decode(&encode(&meta, &ps)).unwrap();
            prop_assert_eq!(ck.meta, meta);
            prop_assert_eq!(ck.params, ps);
        }
    }
}
