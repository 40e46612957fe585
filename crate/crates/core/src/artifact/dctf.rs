//! DCTF tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size        field
//! 0       4           magic "DCTF"
//! 4       1           version (1)
//! 5       1           dtype code: 1 = float32, 2 = int32, 3 = uint8
//! 6       1           rank
//! 7       5           reserved, zero
//! 12      8 * rank    dims (u64)
//! ..      ..          row-major payload
//! end-4   4           CRC32 (IEEE) of the payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{CoresetError, Result};

pub const MAGIC: &[u8; 4] = b"DCTF";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Float32,
    Int32,
    UInt8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Float32 => 1,
            DType::Int32 => 2,
            DType::UInt8 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::Float32),
            2 => Some(DType::Int32),
            3 => Some(DType::UInt8),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::Float32 => "float32",
            DType::Int32 => "int32",
            DType::UInt8 => "uint8",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "float32" => Some(DType::Float32),
            "int32" => Some(DType::Int32),
            "uint8" => Some(DType::UInt8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            DType::Float32 | DType::Int32 => 4,
            DType::UInt8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoresetError::arg(format!(
                "tensor shape {shape:?} holds {expected} elements, payload has {}",
                data.len()
            )));
        }
        if shape.len() > u8::MAX as usize {
            return Err(CoresetError::arg(format!("rank {} too large", shape.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::Float32,
            TensorData::I32(_) => DType::Int32,
            TensorData::U8(_) => DType::UInt8,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::U8(v) => v.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.shape.len() + payload.len() + 4);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&[0u8; 5]);
        for &dim in &self.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        out
    }

    /// Decodes a DCTF byte buffer. `name` is used in error messages.
    pub fn from_bytes(bytes: &[u8], name: &str) -> Result<Self> {
        let err = |msg: String| CoresetError::format(name, msg);
        if bytes.len() < HEADER_LEN + 4 {
            return Err(err(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(err(format!("header magic mismatch: {:?}", &bytes[0..4])));
        }
        if bytes[4] != VERSION {
            return Err(err(format!("unsupported version {}", bytes[4])));
        }
        let dtype =
            DType::from_code(bytes[5]).ok_or_else(|| err(format!("unknown dtype code {}", bytes[5])))?;
        let rank = bytes[6] as usize;
        if bytes[7..12].iter().any(|&b| b != 0) {
            return Err(err("reserved header bytes are not zero".into()));
        }
        let dims_end = HEADER_LEN + 8 * rank;
        if bytes.len() < dims_end + 4 {
            return Err(err("truncated dimension table".into()));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut count: usize = 1;
        for r in 0..rank {
            let off = HEADER_LEN + 8 * r;
            let dim = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let dim = usize::try_from(dim).map_err(|_| err(format!("dimension {dim} too large")))?;
            count = count
                .checked_mul(dim)
                .ok_or_else(|| err("element count overflows".into()))?;
            shape.push(dim);
        }
        let payload_len = count
            .checked_mul(dtype.size())
            .ok_or_else(|| err("payload size overflows".into()))?;
        let expected_len = dims_end + payload_len + 4;
        if bytes.len() != expected_len {
            return Err(err(format!(
                "file is {} bytes, header implies {expected_len}",
                bytes.len()
            )));
        }
        let payload = &bytes[dims_end..dims_end + payload_len];
        let stored = u32::from_le_bytes(bytes[expected_len - 4..].try_into().unwrap());
        let actual = crc32fast::hash(payload);
        if stored != actual {
            return Err(err(format!(
                "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        let data = match dtype {
            DType::Float32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::Int32 => TensorData::I32(
                payload
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::UInt8 => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { shape, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| CoresetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::from_bytes(&bytes, &name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| CoresetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor {
        Tensor::new(vec![2, 3], TensorData::F32(vec![0.0, 1.5, -2.0, 3.25, 1e-7, 9.0])).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[0..4], b"DCTF");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[7..12], &[0; 5]);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 12 + 16 + 24 + 4);
    }

    #[test]
    fn decode_encode() {
        let t = sample();
        assert_eq!(Tensor::from_bytes(&t.to_bytes(), "x").unwrap(), t);
        let labels = Tensor::new(vec![3], TensorData::I32(vec![0, -1, 7])).unwrap();
        assert_eq!(Tensor::from_bytes(&labels.to_bytes(), "x").unwrap(), labels);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = sample().to_bytes();
        bytes[30] ^= 0x01;
        let err = Tensor::from_bytes(&bytes, "features.dctf").unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        assert!(err.to_string().contains("features.dctf"), "{err}");
    }

    #[test]
    fn bad_magic_and_reserved() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(Tensor::from_bytes(&bytes, "f").unwrap_err().to_string().contains("magic"));
        let mut bytes = sample().to_bytes();
        bytes[9] = 1;
        assert!(Tensor::from_bytes(&bytes, "f").unwrap_err().to_string().contains("reserved"));
    }

    #[test]
    fn truncated_input() {
        let bytes = sample().to_bytes();
        for len in [0, 5, 15, bytes.len() - 1] {
            assert!(Tensor::from_bytes(&bytes[..len], "f").is_err());
        }
    }

    #[test]
    fn shape_payload_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 2], TensorData::U8(vec![1, 2, 3])).is_err());
    }
}
