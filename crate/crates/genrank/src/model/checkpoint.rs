//! Binary checkpoint container.
//!
//! Layout: `GRCKPT01` magic, length-prefixed config JSON, length-prefixed
//! metadata JSON, then named parameter tensors with explicit shapes and
//! little-endian f64 payloads. Reload is bit-exact.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::params::ParamSet;
use crate::model::{GenerativeModel, ModelConfig};

const MAGIC: &[u8; 8] = b"GRCKPT01";

/// Training provenance stored alongside the parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epoch: u64,
    pub loss: String,
    pub seed: u64,
}

impl TrainMeta {
    pub fn untrained(seed: u64) -> Self {
        TrainMeta {
            epoch: 0,
            loss: "none".into(),
            seed,
        }
    }
}

pub fn save_checkpoint(path: &Path, model: &GenerativeModel, meta: &TrainMeta) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    let config =
        serde_json::to_vec(&model.config).map_err(|e| Error::Numeric(format!("config json: {e}")))?;
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    let meta_bytes =
        serde_json::to_vec(meta).map_err(|e| Error::Numeric(format!("meta json: {e}")))?;
    out.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_bytes);

    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, tensor) in model.params.iter() {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::cli::write_atomic(path, &out)
}

pub fn load_checkpoint(path: &Path) -> Result<(GenerativeModel, TrainMeta)> {
    let name = path.display().to_string();
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open checkpoint {name}: {e}")))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let mut at = 0usize;

    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        if *at + n > bytes.len() {
            return Err(Error::data(&name, 0, "truncated checkpoint"));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };

    if take(&mut at, 8)? != MAGIC {
        return Err(Error::data(&name, 0, "not a genrank checkpoint (bad magic)"));
    }
    let config_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let config: ModelConfig = serde_json::from_slice(take(&mut at, config_len)?)
        .map_err(|e| Error::data(&name, 0, format!("bad config json: {e}")))?;
    let meta_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let meta: TrainMeta = serde_json::from_slice(take(&mut at, meta_len)?)
        .map_err(|e| Error::data(&name, 0, format!("bad metadata json: {e}")))?;

    let n_params = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut params = ParamSet::new();
    for _ in 0..n_params {
        let name_len = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
        let pname = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .map_err(|_| Error::data(&name, 0, "parameter name is not utf-8"))?;
        let ndim = take(&mut at, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut at, numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.add(pname, Tensor::new(shape, data)?);
    }
    if at != bytes.len() {
        return Err(Error::data(&name, 0, "trailing bytes after parameters"));
    }
    let model = GenerativeModel::from_parts(config, params)?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::text::Vocabulary;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let vocab = {
            let docs = [vec!["ant".to_string(), "bee".to_string(), "ant".to_string()]];
            let streams: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
            Vocabulary::build(streams.iter().copied(), 1).unwrap()
        };
        let dir = tempfile::tempdir().unwrap();
        for arch in Architecture::ALL {
            let cfg = ModelConfig::tiny(arch, vocab.len(), 23);
            let model = GenerativeModel::new(cfg).unwrap();
            let meta = TrainMeta {
                epoch: 3,
                loss: "nll".into(),
                seed: 23,
            };
            let path = dir.path().join(format!("{arch}.ckpt"));
            save_checkpoint(&path, &model, &meta).unwrap();
            let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
            assert_eq!(loaded_meta, meta);
            assert_eq!(loaded.config, model.config);

            let doc: Vec<String> = ["ant", "bee", "newword"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let query = vocab.encode_query(&[String::from("bee")]);
            let a = model.forward_teacher_forced(&doc, &query, &vocab).unwrap();
            let b = loaded.forward_teacher_forced(&doc, &query, &vocab).unwrap();
            for (x, y) in a.iter().zip(&b) {
                for (p, q) in x.final_dist.iter().zip(&y.final_dist) {
                    assert_eq!(p.to_bits(), q.to_bits(), "{arch}: drift after reload");
                }
            }
        }
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_checkpoint");
        std::fs::write(&path, b"junkjunkjunk").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
