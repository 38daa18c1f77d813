//! Single-file checkpoint container: a JSON header (model kind, config,
//! vocabulary, users, optimizer config, RNG position, epoch counter)
//! followed by named f64 tensors and Adam moment slots. Loading rebuilds the
//! model skeleton and overwrites every parameter by name; a round trip
//! reproduces forward outputs bit for bit.

use crate::adam::{AdamConfig, AdamSlot, AdamState};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::param::Value;
use crate::rng::RngSnapshot;
use crate::tensor::{Tensor1, Tensor2};
use crate::training::TrainConfig;
use crate::vocab::Vocabulary;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PDLG";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    model_kind: String,
    model_config: ModelConfig,
    vocab_tokens: Vec<String>,
    users: Vec<String>,
    adam_config: AdamConfig,
    rng: RngSnapshot,
    epochs_done: usize,
    train_config: TrainConfig,
}

pub struct Checkpoint {
    pub model: Model,
    pub adam: AdamState,
    pub rng: RngSnapshot,
    pub epochs_done: usize,
    pub train_config: TrainConfig,
}

pub fn save(
    path: &Path,
    model: &Model,
    adam: &AdamState,
    rng: &RngSnapshot,
    epochs_done: usize,
    train_config: &TrainConfig,
) -> Result<()> {
    let meta = Meta {
        format_version: FORMAT_VERSION,
        model_kind: model.kind.as_str().to_string(),
        model_config: model.config,
        vocab_tokens: model.vocab.tokens().to_vec(),
        users: model.users.clone(),
        adam_config: adam.config,
        rng: rng.clone(),
        epochs_done,
        train_config: train_config.clone(),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;

    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&meta_bytes)?;

    w.write_all(&(model.store.len() as u64).to_le_bytes())?;
    for (id, param) in model.store.iter() {
        write_str(&mut w, &param.name)?;
        match &param.value {
            Value::Vec(v) => {
                w.write_all(&[1u8])?;
                w.write_all(&(v.len() as u64).to_le_bytes())?;
                write_f64s(&mut w, v.as_slice())?;
            }
            Value::Mat(m) => {
                w.write_all(&[2u8])?;
                w.write_all(&(m.rows() as u64).to_le_bytes())?;
                w.write_all(&(m.cols() as u64).to_le_bytes())?;
                write_f64s(&mut w, m.as_slice())?;
            }
        }
        let slot = &adam.slots[id.0];
        w.write_all(&slot.t.to_le_bytes())?;
        w.write_all(&(slot.m.len() as u64).to_le_bytes())?;
        write_f64s(&mut w, &slot.m)?;
        write_f64s(&mut w, &slot.v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let meta_len = read_u64(&mut r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)?;

    let kind = ModelKind::parse(&meta.model_kind)?;
    let mut vocab = Vocabulary::from_tokens(meta.vocab_tokens.clone());
    vocab.rebuild_index();
    let mut model = Model::build(kind, meta.model_config, vocab, &meta.users, 0);
    let mut adam = AdamState::new(meta.adam_config, &model.store);

    let n_tensors = read_u64(&mut r)? as usize;
    if n_tensors != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {n_tensors} tensors but the rebuilt model has {}",
            model.store.len()
        )));
    }
    for _ in 0..n_tensors {
        let name = read_str(&mut r)?;
        let id = model.store.id_of(&name).ok_or_else(|| {
            Error::Checkpoint(format!("checkpoint tensor `{name}` not in model"))
        })?;
        let mut kind_byte = [0u8; 1];
        r.read_exact(&mut kind_byte)?;
        let value = match kind_byte[0] {
            1 => {
                let len = read_u64(&mut r)? as usize;
                Value::Vec(Tensor1(read_f64s(&mut r, len)?))
            }
            2 => {
                let rows = read_u64(&mut r)? as usize;
                let cols = read_u64(&mut r)? as usize;
                let data = read_f64s(&mut r, rows * cols)?;
                let mut m = Tensor2::zeros(rows, cols);
                m.as_mut_slice().copy_from_slice(&data);
                Value::Mat(m)
            }
            k => {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}`: unknown kind byte {k}"
                )))
            }
        };
        if value.elem_count() != model.store.value(id).elem_count() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}`: shape mismatch against rebuilt model"
            )));
        }
        *model.store.value_mut(id) = value;

        let t = read_u64(&mut r)?;
        let len = read_u64(&mut r)? as usize;
        let m = read_f64s(&mut r, len)?;
        let v = read_f64s(&mut r, len)?;
        adam.slots[id.0] = AdamSlot { m, v, t };
    }

    Ok(Checkpoint {
        model,
        adam,
        rng: meta.rng,
        epochs_done: meta.epochs_done,
        train_config: meta.train_config,
    })
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u64(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(format!("bad tensor name: {e}")))
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::vocab::Vocabulary;

    fn small_model() -> Model {
        let corpus = [vec!["a".to_string(), "b".to_string()]];
        let vocab = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1).unwrap();
        let config = ModelConfig {
            d_hidden: 3,
            d_emb: 2,
            ..ModelConfig::default()
        };
        Model::build(
            ModelKind::PtHred,
            config,
            vocab,
            &["user_00".into(), "user_01".into()],
            42,
        )
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let model = small_model();
        let adam = AdamState::new(AdamConfig::default(), &model.store);
        let rng_snap = RngSnapshot::capture(7, &seeded(7));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &model, &adam, &rng_snap, 3, &TrainConfig::default()).unwrap();

        let loaded = load(&path).unwrap();
        assert_eq!(loaded.model.kind, ModelKind::PtHred);
        assert_eq!(loaded.epochs_done, 3);
        assert_eq!(loaded.model.users, model.users);
        assert_eq!(loaded.model.vocab.tokens(), model.vocab.tokens());
        for (id, p) in model.store.iter() {
            let q = loaded.model.store.value(id);
            assert_eq!(p.value.as_flat(), q.as_flat(), "tensor {}", p.name);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }
}
