//! Checkpoint files.
//!
//! Layout: the 8-byte magic `PARLEYCK`, a little-endian `u32` format version,
//! a `u64` header length, the JSON header, the raw little-endian tensor blob,
//! and a SHA-256 digest of everything before it. The header lists each
//! tensor's name, shape and byte offset into the blob, and embeds the
//! tokenizer together with its content hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::optim::AdamState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tokenizer::BpeModel;

pub const MAGIC: &[u8; 8] = b"PARLEYCK";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerEntry {
    step: usize,
    m: Vec<TensorEntry>,
    v: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    config: ModelConfig,
    step: usize,
    tokenizer_hash: String,
    tokenizer: String,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub tokenizer: BpeModel,
    pub step: usize,
    pub optimizer: Option<AdamState<T>>,
}

fn append<T: Scalar>(blob: &mut Vec<u8>, name: &str, t: &Tensor<T>) -> TensorEntry {
    let entry = TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset: blob.len() };
    for &x in t.data() {
        x.write_le(blob);
    }
    entry
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: ModelParams<T>, tokenizer: BpeModel) -> Self {
        Self { params, tokenizer, step: 0, optimizer: None }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blob = Vec::new();
        let tensors = self
            .params
            .names()
            .iter()
            .zip(self.params.tensors())
            .map(|(n, t)| append(&mut blob, n, t))
            .collect();
        let optimizer = self.optimizer.as_ref().map(|st| {
            let names = self.params.names();
            let m = names.iter().zip(&st.m).map(|(n, t)| append(&mut blob, n, t)).collect();
            let v = names.iter().zip(&st.v).map(|(n, t)| append(&mut blob, n, t)).collect();
            OptimizerEntry { step: st.step, m, v }
        });
        let header = Header {
            format_version: FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            config: self.params.config.clone(),
            step: self.step,
            tokenizer_hash: self.tokenizer.content_hash(),
            tokenizer: self.tokenizer.to_json(),
            tensors,
            optimizer,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + 12 + header.len() + blob.len() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&blob);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parses a checkpoint whose tensors must match its own stored config.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, blob) = parse(bytes)?;
        let config = header.config.clone();
        Self::assemble(header, blob, &config)
    }

    /// Parses a checkpoint and checks its tensors against `expected`.
    pub fn from_bytes_for(bytes: &[u8], expected: &ModelConfig) -> Result<Self> {
        let (header, blob) = parse(bytes)?;
        Self::assemble(header, blob, expected)
    }

    fn assemble(header: Header, blob: &[u8], config: &ModelConfig) -> Result<Self> {
        if header.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("file stores {} tensors, expected {}", header.dtype, T::DTYPE)));
        }
        let tokenizer = BpeModel::from_json(&header.tokenizer)?;
        if tokenizer.content_hash() != header.tokenizer_hash {
            return Err(Error::Checkpoint("embedded tokenizer does not match its recorded hash".into()));
        }
        let named = read_all::<T>(&header.tensors, blob)?;
        let params = ModelParams::from_named(config, named)?;
        let optimizer = match &header.optimizer {
            None => None,
            Some(o) => {
                let m = read_all::<T>(&o.m, blob)?.into_iter().map(|(_, t)| t).collect::<Vec<_>>();
                let v = read_all::<T>(&o.v, blob)?.into_iter().map(|(_, t)| t).collect::<Vec<_>>();
                let shapes_ok = |ts: &[Tensor<T>]| {
                    ts.len() == params.tensors().len()
                        && ts.iter().zip(params.tensors()).all(|(a, b)| a.shape() == b.shape())
                };
                if !shapes_ok(&m) || !shapes_ok(&v) {
                    return Err(Error::Checkpoint("optimizer state does not match the parameters".into()));
                }
                Some(AdamState { step: o.step, m, v })
            }
        };
        Ok(Self { params, tokenizer, step: header.step, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    pub fn load_for(path: &Path, expected: &ModelConfig) -> Result<Self> {
        Self::from_bytes_for(&read_file(path)?, expected)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let fixed = MAGIC.len() + 4 + 8;
    if bytes.len() < fixed + DIGEST_LEN {
        return Err(Error::Checkpoint(format!("file is truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (this build reads version {FORMAT_VERSION})"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch: file is truncated or corrupted".into()));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if header_len > body.len() - fixed {
        return Err(Error::Checkpoint("header length exceeds file size".into()));
    }
    let header: Header = serde_json::from_slice(&body[fixed..fixed + header_len])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != version {
        return Err(Error::Checkpoint("header version disagrees with file version".into()));
    }
    Ok((header, &body[fixed + header_len..]))
}

fn read_all<T: Scalar>(entries: &[TensorEntry], blob: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    entries
        .iter()
        .map(|e| {
            let n = crate::tensor::numel(&e.shape);
            let end = e.offset + n * T::BYTES;
            let bytes = blob
                .get(e.offset..end)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} lies outside the data section", e.name)))?;
            let data = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
            Ok((e.name.clone(), Tensor::new(e.shape.clone(), data)?))
        })
        .collect()
}
