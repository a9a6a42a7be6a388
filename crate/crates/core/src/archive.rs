//! `ADF1` container: the on-disk format of demand tensors and checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"ADF1"                      4 bytes, magic
//! header_len                   u64 little-endian
//! header                       header_len bytes of UTF-8 JSON
//! payload                      row-major f64 little-endian values
//! ```
//!
//! The payload length is implied by the file size and must be a multiple of
//! eight. Reading and writing round-trip bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADF1";

pub fn encode<H: Serialize>(header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Archive("missing ADF1 magic".into()));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(12))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Archive(format!("header length {len} exceeds file size")))?;
    let header = serde_json::from_slice(&bytes[12..end])
        .map_err(|e| Error::Archive(format!("bad header: {e}")))?;
    let body = &bytes[end..];
    if !body.len().is_multiple_of(8) {
        return Err(Error::Archive(format!(
            "payload of {} bytes is not a whole number of f64 values",
            body.len()
        )));
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}

pub fn write_file<H: Serialize>(path: &Path, header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode(header, payload)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn read_file<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn rejects_truncated_and_foreign_files() {
        assert!(decode::<serde_json::Value>(b"ADF0\0\0\0\0\0\0\0\0").is_err());
        let mut bytes = encode(&json!({"a": 1}), &[1.0, 2.0]).unwrap();
        bytes.pop();
        assert!(decode::<serde_json::Value>(&bytes).is_err());
        let mut bytes = encode(&json!({"a": 1}), &[]).unwrap();
        bytes[4] = 200;
        assert!(decode::<serde_json::Value>(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let bytes = encode(&json!({"n": values.len()}), &values).unwrap();
            let (h, back): (serde_json::Value, Vec<f64>) = decode(&bytes).unwrap();
            prop_assert_eq!(h["n"].as_u64().unwrap() as usize, values.len());
            let a: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
