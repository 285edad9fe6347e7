//! Checkpoints: a JSON manifest next to a raw little-endian payload.
//!
//! ```text
//! <dir>/manifest.json   hyperparameters, view layout, τ, counters, rng state,
//!                       and one {name, shape, offset, dtype} entry per array
//! <dir>/params.bin      the arrays back to back, in manifest order
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ViewConfig};
use crate::numerics::{Dtype, Tensor};

pub const FORMAT: &str = "mvembed-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const PAYLOAD: &str = "params.bin";

/// A model with the settings and random state that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub iteration: u64,
    pub epoch: u64,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub dtype: Dtype,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub view_config: ViewConfig,
    pub d: usize,
    pub dim: usize,
    pub final_state: String,
    pub tau: f64,
    pub tau_trainable: bool,
    pub iteration: u64,
    pub epoch: u64,
    pub seed: u64,
    pub dtype: Dtype,
    pub rng: RngState,
    pub hyperparameters: BTreeMap<String, String>,
    pub payload: String,
    pub payload_bytes: u64,
    pub arrays: Vec<ArrayEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corruption(msg.into())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return Err(corrupt("rng seed must be 64 hex digits"));
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| corrupt("bad rng seed"))?;
    }
    Ok(out)
}

/// Arrays in payload order: the encoder weights, then τ.
fn arrays(model: &Model) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = model
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    out.push(("tau".into(), Tensor::new(vec![1], vec![model.tau.value]).expect("one element")));
    out
}

fn encode(t: &Tensor, dtype: Dtype, buf: &mut Vec<u8>) {
    for &x in t.data() {
        match dtype {
            Dtype::F64 => buf.extend_from_slice(&x.to_le_bytes()),
            Dtype::F32 => buf.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
}

fn decode(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    }
}

/// Manifest and payload bytes for `ckpt`.
pub fn to_bytes(ckpt: &Checkpoint) -> Result<(Manifest, Vec<u8>)> {
    let dtype = ckpt.config.dtype;
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    for (name, t) in arrays(&ckpt.model) {
        entries.push(ArrayEntry {
            name,
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
            dtype,
        });
        encode(&t, dtype, &mut payload);
    }
    let m = &ckpt.model;
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        view_config: m.views,
        d: m.d,
        dim: m.dim,
        final_state: m.final_state.name().into(),
        tau: m.tau.value,
        tau_trainable: m.tau.trainable,
        iteration: ckpt.iteration,
        epoch: ckpt.epoch,
        seed: ckpt.config.seed,
        dtype,
        rng: RngState {
            seed: hex(&ckpt.rng.get_seed()),
            stream: ckpt.rng.get_stream(),
            word_pos: ckpt.rng.get_word_pos().to_string(),
        },
        hyperparameters: ckpt
            .config
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        payload: PAYLOAD.into(),
        payload_bytes: payload.len() as u64,
        arrays: entries,
    };
    Ok((manifest, payload))
}

pub fn save(ckpt: &Checkpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, payload) = to_bytes(ckpt)?;
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Input(format!("manifest serialization: {e}")))?;
    text.push('\n');
    let mpath = dir.join(MANIFEST);
    std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PAYLOAD);
    std::fs::write(&ppath, payload).map_err(|e| Error::io(&ppath, e))?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT {
        return Err(corrupt(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.version != VERSION {
        return Err(corrupt(format!(
            "version {} is not supported (expected {VERSION})",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Rebuilds a checkpoint from its manifest and payload, checking every array
/// against the layout the manifest's view configuration implies.
pub fn from_parts(manifest: &Manifest, payload: &[u8]) -> Result<Checkpoint> {
    if payload.len() as u64 != manifest.payload_bytes {
        return Err(corrupt(format!(
            "payload holds {} bytes, manifest declares {}",
            payload.len(),
            manifest.payload_bytes
        )));
    }
    let mut model = Model::zeros(manifest.view_config, manifest.d, manifest.dim);
    model.final_state = manifest
        .final_state
        .parse()
        .map_err(|_| corrupt(format!("unknown final state {:?}", manifest.final_state)))?;
    let expected = arrays(&model);
    if expected.len() != manifest.arrays.len() {
        return Err(corrupt(format!(
            "{} arrays listed, layout needs {}",
            manifest.arrays.len(),
            expected.len()
        )));
    }
    let mut offset = 0u64;
    let mut values = Vec::with_capacity(expected.len());
    for ((name, t), entry) in expected.iter().zip(&manifest.arrays) {
        if &entry.name != name || entry.shape != t.shape() {
            return Err(corrupt(format!(
                "array {} {:?} where layout needs {} {:?}",
                entry.name,
                entry.shape,
                name,
                t.shape()
            )));
        }
        if entry.offset != offset {
            return Err(corrupt(format!("array {} at offset {}, expected {offset}", entry.name, entry.offset)));
        }
        let size = (t.len() * entry.dtype.bytes()) as u64;
        let end = offset + size;
        if end > payload.len() as u64 {
            return Err(corrupt(format!("array {} runs past the payload", entry.name)));
        }
        values.push(decode(&payload[offset as usize..end as usize], entry.dtype));
        offset = end;
    }
    if offset != payload.len() as u64 {
        return Err(corrupt("payload has trailing bytes"));
    }
    let tau = values.pop().expect("tau entry")[0];
    for (slot, data) in model.tensors_mut().into_iter().zip(values) {
        *slot = Tensor::new(slot.shape().to_vec(), data)?;
    }
    model.tau.value = tau;
    model.tau.trainable = manifest.tau_trainable;

    let mut config = TrainConfig::default();
    for (k, v) in &manifest.hyperparameters {
        config
            .set(k, v)
            .map_err(|e| corrupt(format!("hyperparameter {k}: {e}")))?;
    }
    let mut rng = ChaCha8Rng::from_seed(unhex(&manifest.rng.seed)?);
    rng.set_stream(manifest.rng.stream);
    rng.set_word_pos(
        manifest
            .rng
            .word_pos
            .parse()
            .map_err(|_| corrupt("bad rng word position"))?,
    );
    Ok(Checkpoint {
        model,
        config,
        iteration: manifest.iteration,
        epoch: manifest.epoch,
        rng,
    })
}

pub fn load(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let ppath = dir.join(&manifest.payload);
    let payload = std::fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    from_parts(&manifest, &payload)
}

/// `1234567` as `1,234,567`.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Human-readable summary of a checkpoint.
pub fn inspect(ckpt: &Checkpoint) -> String {
    let m = &ckpt.model;
    let mut s = String::new();
    s.push_str(&format!("view_config: {}\n", m.views));
    s.push_str(&format!("d: {}\n", m.d));
    s.push_str(&format!("D: {}\n", m.dim));
    s.push_str(&format!("final_state: {}\n", m.final_state.name()));
    s.push_str(&format!("dtype: {}\n", ckpt.config.dtype.name()));
    s.push_str(&format!("tau: {}\n", m.tau.value));
    s.push_str(&format!("iteration: {}\n", ckpt.iteration));
    s.push_str(&format!("epoch: {}\n", ckpt.epoch));
    s.push_str(&format!("seed: {}\n", ckpt.config.seed));
    s.push_str(&format!(
        "parameters (stored model): {}\n",
        group_thousands(m.parameter_count())
    ));
    s.push_str(&format!(
        "parameters (6*d*d*2 + 300*2d): {}\n",
        group_thousands(crate::encoders::parameter_count(m.d as u64))
    ));
    s
}
