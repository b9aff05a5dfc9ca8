//! Named-tensor weight file.
//!
//! ```text
//! "CSPW"  u32 version = 1  u32 entry_count
//! entry: u16 name_len, name (UTF-8), u8 rank, rank × u32 dims,
//!        u8 dtype (0 = f32), product(dims) × f32 payload
//! ```
//!
//! All integers and floats are little-endian. Entries are written in store
//! order, so save → load → save reproduces the same bytes.

use std::path::Path;

use crate::weights::{ParamTensor, WeightStore};
use crate::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"CSPW";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn encode(store: &WeightStore) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(store.len()).map_err(|_| FormatError::Unencodable("too many entries".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in store.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| FormatError::Unencodable(format!("name `{name}` longer than 65535 bytes")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.dims().len())
            .map_err(|_| FormatError::Unencodable(format!("`{name}` has rank above 255")))?;
        out.push(rank);
        for &d in t.dims() {
            let d = u32::try_from(d).map_err(|_| FormatError::Unencodable(format!("`{name}` has a dim above u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(DTYPE_F32);
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<WeightStore, FormatError> {
    let mut rd = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = rd.array()?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let count = rd.u32()?;
    let mut store = WeightStore::new();
    for _ in 0..count {
        let len = rd.u16()? as usize;
        let name = std::str::from_utf8(rd.take(len)?)
            .map_err(|_| FormatError::InvalidName)?
            .to_string();
        let rank = rd.u8()? as usize;
        let dims = (0..rank)
            .map(|_| rd.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let dtype = rd.u8()?;
        if dtype != DTYPE_F32 {
            return Err(FormatError::UnsupportedDtype(dtype));
        }
        let available = bytes.len() - rd.pos;
        let n_bytes = dims
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or(FormatError::Truncated {
                offset: rd.pos,
                needed: usize::MAX,
                available,
            })?;
        let data = rd
            .take(n_bytes)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        if store.get(&name).is_some() {
            return Err(FormatError::DuplicateName(name));
        }
        let tensor = ParamTensor::new(dims, data).expect("payload length follows dims");
        store.insert(name, tensor).expect("name checked unique");
    }
    let rest = bytes.len() - rd.pos;
    if rest != 0 {
        return Err(FormatError::TrailingBytes(rest));
    }
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: &Path) -> Result<()> {
    let bytes = encode(store)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<WeightStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?)
}
