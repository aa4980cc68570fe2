//! Binary model file.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "MTTX1"
//! 5       4     u32 LE descriptor length D
//! 9       D     descriptor: u32 LE layer count L, then L records of 17 bytes:
//!               u8 kind (0 conv, 1 conv_transpose, 2 instance_norm, 3 relu,
//!               4 tanh, 5 residual), u32 LE kernel, u32 LE stride,
//!               u32 LE in_channels, u32 LE out_channels
//! 9+D     P     f32 LE parameters, layer by layer in descriptor order; within
//!               a layer, tensors in `LayerSpec::param_shapes` order, each
//!               tensor row-major
//! 9+D+P   4     u32 LE CRC-32 (IEEE) of every preceding byte
//! ```

use alloc::vec::Vec;

use super::{LayerKind, LayerSpec, TransferModel};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"MTTX1";
const RECORD: usize = 17;

pub fn to_bytes(model: &mut TransferModel<f32>) -> Vec<u8> {
    let specs = model.specs().to_vec();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let desc_len = 4 + RECORD * specs.len();
    out.extend_from_slice(&(desc_len as u32).to_le_bytes());
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for s in &specs {
        out.push(s.kind.code());
        for v in [s.kernel, s.stride, s.in_channels, s.out_channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    for p in model.params_mut() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::ModelFormat(alloc::format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TransferModel<f32>> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::ModelFormat("file shorter than magic".into()));
    }
    let magic: [u8; 5] = bytes[..5].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::Version(magic));
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::ModelFormat("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let desc_len = r.u32()? as usize;
    let desc_start = r.pos;
    let count = r.u32()? as usize;
    if desc_len != 4 + RECORD * count {
        return Err(Error::ModelFormat("descriptor length disagrees with layer count".into()));
    }
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let code = r.take(1)?[0];
        let kind = LayerKind::from_code(code)
            .ok_or_else(|| Error::ModelFormat(alloc::format!("unknown layer kind {code}")))?;
        let kernel = r.u32()? as usize;
        let stride = r.u32()? as usize;
        let in_channels = r.u32()? as usize;
        let out_channels = r.u32()? as usize;
        specs.push(LayerSpec { kind, kernel, stride, in_channels, out_channels });
    }
    debug_assert_eq!(r.pos, desc_start + desc_len);
    let mut model = if specs.is_empty() {
        TransferModel::passthrough()
    } else {
        TransferModel::from_specs(specs, 0)?
    };
    for p in model.params_mut() {
        let raw = r.take(4 * p.numel())?;
        for (v, chunk) in p.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != body.len() {
        return Err(Error::ModelFormat(alloc::format!(
            "{} trailing bytes after parameters",
            body.len() - r.pos
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchConfig, Tensor};

    fn small() -> TransferModel<f32> {
        let arch = ArchConfig { widths: [4, 6, 8], residual_blocks: 1, outer_kernel: 3, inner_kernel: 3 };
        TransferModel::new(&arch, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = small();
        let bytes = to_bytes(&mut m);
        assert_eq!(&bytes[..5], MAGIC);
        let mut back = from_bytes(&bytes).unwrap();
        assert_eq!(back.specs(), m.specs());
        assert_eq!(to_bytes(&mut back), bytes);
        let x = Tensor::full([1, 3, 8, 8], 0.25f32);
        assert_eq!(m.forward(x.clone(), false).unwrap(), back.forward(x, false).unwrap());
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = to_bytes(&mut small());
        let i = bytes.len() - 10;
        bytes[i] ^= 0x40;
        assert!(matches!(from_bytes(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn wrong_magic_is_version_error() {
        let mut bytes = to_bytes(&mut small());
        bytes[4] = b'2';
        assert_eq!(from_bytes(&bytes).err(), Some(Error::Version(*b"MTTX2")));
    }

    #[test]
    fn passthrough_round_trip() {
        let bytes = to_bytes(&mut TransferModel::passthrough());
        assert!(from_bytes(&bytes).unwrap().specs().is_empty());
    }
}
