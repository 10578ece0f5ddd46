//! Line-delimited JSON files with a metadata header, and seed derivation.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "xmopkit";

/// First line of every dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub tool: String,
    pub version: String,
    /// Hex SHA-256 of the generating configuration's JSON.
    pub config_hash: String,
    pub seed: u64,
    pub kind: String,
}

impl DatasetHeader {
    pub fn new<C: Serialize>(kind: &str, config: &C, seed: u64) -> Result<Self> {
        Ok(Self {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config)?,
            seed,
            kind: kind.to_string(),
        })
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Writes the header and one compact JSON record per line.
pub fn write_jsonl<W: Write, R: Serialize>(mut w: W, header: &DatasetHeader, records: &[R]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<B: BufRead, R: DeserializeOwned>(reader: B) -> Result<(DatasetHeader, Vec<R>)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::EmptyDataset),
    };
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok((header, records))
}

/// Independent 64-bit seed for `stream` under `master`, via SplitMix64 mixing.
pub fn derive_seed(master: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(master), |acc, s| mix(acc ^ mix(*s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let h = DatasetHeader::new("test", &[1, 2, 3], 7).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &h, &[vec![1.5, 2.0], vec![]]).unwrap();
        let (h2, rs): (_, Vec<Vec<f64>>) = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(h, h2);
        assert_eq!(rs, vec![vec![1.5, 2.0], vec![]]);
        assert_eq!(h.config_hash.len(), 64);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(read_jsonl::<_, u8>(&b""[..]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn seeds_differ_by_stream() {
        let a = derive_seed(1, &[0]);
        assert_ne!(a, derive_seed(1, &[1]));
        assert_ne!(a, derive_seed(2, &[0]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(a, derive_seed(1, &[0]));
    }
}
