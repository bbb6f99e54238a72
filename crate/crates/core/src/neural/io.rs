//! Weight files: the magic `ATFN1`, a `u64` array count, then for each array
//! a `u64` rank, `u64` dimensions and the values as `f64`, all little-endian.
//! A JSON sidecar at `<path>.json` holds the model settings and scaling.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::DenseArray;
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"ATFN1";

pub fn write_arrays(arrays: &[DenseArray]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend((arrays.len() as u64).to_le_bytes());
    for a in arrays {
        out.extend((a.shape().len() as u64).to_le_bytes());
        for d in a.shape() {
            out.extend((*d as u64).to_le_bytes());
        }
        for v in a.data() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Weights(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take::<8>()?);
        usize::try_from(v).map_err(|_| Error::Weights(format!("size {v} too large")))
    }
}

pub fn read_arrays(bytes: &[u8]) -> Result<Vec<DenseArray>> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<5>()? != MAGIC {
        return Err(Error::Weights("missing ATFN1 header".into()));
    }
    let count = r.u64()?;
    let mut arrays = Vec::new();
    for _ in 0..count {
        let rank = r.u64()?;
        let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .filter(|n| *n <= bytes.len() / 8)
            .ok_or_else(|| Error::Weights(format!("implausible shape {shape:?}")))?;
        let data = (0..len)
            .map(|_| Ok(f64::from_le_bytes(r.take::<8>()?)))
            .collect::<Result<Vec<_>>>()?;
        arrays.push(DenseArray::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Weights(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(arrays)
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct Sidecar<T> {
    kind: String,
    model: T,
}

pub(crate) fn save<T: Serialize>(path: &Path, kind: &str, meta: &T, params: &[DenseArray]) -> Result<()> {
    std::fs::write(path, write_arrays(params))?;
    let sidecar = Sidecar {
        kind: kind.to_string(),
        model: meta,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub(crate) fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(T, Vec<DenseArray>)> {
    let params = read_arrays(&std::fs::read(path)?)?;
    let sidecar: Sidecar<T> = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.kind != kind {
        return Err(Error::Weights(format!(
            "sidecar describes a {} model, expected {kind}",
            sidecar.kind
        )));
    }
    Ok((sidecar.model, params))
}

pub(crate) fn check_shapes(expected: &[DenseArray], got: &[DenseArray]) -> Result<()> {
    let same = expected.len() == got.len()
        && expected.iter().zip(got).all(|(a, b)| a.shape() == b.shape());
    if same {
        Ok(())
    } else {
        Err(Error::Weights("weight shapes do not match the sidecar spec".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let arrays = vec![
            DenseArray::new(vec![2, 1], vec![1.5, -2.0]).unwrap(),
            DenseArray::new(vec![1], vec![0.25]).unwrap(),
        ];
        let bytes = write_arrays(&arrays);
        assert_eq!(&bytes[..5], b"ATFN1");
        assert_eq!(bytes.len(), 5 + 8 + (8 + 16 + 16) + (8 + 8 + 8));
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 2);
        assert_eq!(read_arrays(&bytes).unwrap(), arrays);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = write_arrays(&[DenseArray::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()]);
        assert!(read_arrays(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_arrays(b"ATFN0").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_arrays(&extra).is_err());
        let mut huge = b"ATFN1".to_vec();
        huge.extend(1u64.to_le_bytes());
        huge.extend(1u64.to_le_bytes());
        huge.extend(u64::MAX.to_le_bytes());
        assert!(read_arrays(&huge).is_err());
    }
}
