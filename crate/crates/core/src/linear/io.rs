//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "BLCHMODL"
//! version    u32
//! total_len  u64      length of the whole file
//! header_len u64
//! header     JSON     spec, trainer config, vocabulary, frequency table
//! n_values   u64      number of features + 1
//! values     f64 * n  weights, then the bias
//! checksum   32 bytes SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LinearModel, TrainerConfig};
use crate::bleach::FrequencyTable;
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Featurizer, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BLCHMODL";
const PREFIX_LEN: usize = 8 + 4 + 8 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: FeatureSpec,
    trainer_config: TrainerConfig,
    seed: u64,
    vocab: Vocabulary,
    freq_table: Option<Vec<(String, u64)>>,
}

pub fn to_bytes(m: &LinearModel) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        spec: m.featurizer.spec.clone(),
        trainer_config: m.trainer.clone(),
        seed: m.trainer.seed,
        vocab: m.featurizer.vocab.clone(),
        freq_table: m.featurizer.freq_table.as_ref().map(|t| {
            t.sorted_entries()
                .into_iter()
                .map(|(k, c)| (k.to_string(), c))
                .collect()
        }),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let n_values = m.weights.len() + 1;
    let total = PREFIX_LEN + header.len() + 8 + 8 * n_values + CHECKSUM_LEN;

    let mut buf = Vec::with_capacity(total);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(total as u64).to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(n_values as u64).to_le_bytes());
    for w in m.weights.iter().chain(std::iter::once(&m.bias)) {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    debug_assert_eq!(buf.len(), total);
    Ok(buf)
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<LinearModel> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::ModelTruncated(format!("{} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < PREFIX_LEN + 8 + CHECKSUM_LEN {
        return Err(Error::ModelTruncated(format!("{} bytes", bytes.len())));
    }
    let total = read_u64(bytes, 12);
    if (bytes.len() as u64) < total {
        return Err(Error::ModelTruncated(format!("expected {total} bytes, found {}", bytes.len())));
    }
    if (bytes.len() as u64) > total {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after declared end",
            bytes.len() as u64 - total
        )));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::ModelChecksum);
    }

    let header_len = read_u64(body, 20) as usize;
    let values_at = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&end| end + 8 <= body.len())
        .ok_or_else(|| Error::ModelFormat("header length exceeds file".into()))?;
    let header: Header = serde_json::from_slice(&body[PREFIX_LEN..values_at])
        .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    let n_values = read_u64(body, values_at) as usize;
    let data = &body[values_at + 8..];
    if n_values == 0 || data.len() != 8 * n_values {
        return Err(Error::ModelFormat("weight array length mismatch".into()));
    }
    if n_values != header.vocab.len() + 1 {
        return Err(Error::ModelFormat(format!(
            "{} weights for a vocabulary of {}",
            n_values - 1,
            header.vocab.len()
        )));
    }
    let mut values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelFormat("non-finite weight".into()));
    }
    let bias = values.pop().expect("n_values >= 1");
    let freq_table = header.freq_table.map(FrequencyTable::from_counts);
    Ok(LinearModel {
        weights: values,
        bias,
        featurizer: Featurizer::from_parts(header.spec, freq_table, header.vocab),
        trainer: header.trainer_config,
    })
}

pub fn save_model(m: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
