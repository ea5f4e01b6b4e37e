//! Binary checkpoint format.
//!
//! Layout: the 9-byte magic `HELMCKPT1`, a little-endian u64 header length,
//! a JSON header, then every tensor as little-endian f32 in header order.
//! The header records the config, step counter, RNG position, and the shape
//! of every tensor (parameters, then Adam m, then Adam v). Because training
//! keeps all tensors on the f32 grid, save/load round-trips bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::Params;
use super::optim::AdamState;
use super::{ModelError, ModelState};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"HELMCKPT1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TensorSpec {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RngSpec {
    /// 32-byte ChaCha8 seed, hex-encoded.
    seed: String,
    /// Stream word position, decimal string (u128).
    word_pos: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Header {
    format: String,
    config: ModelConfig,
    step: u64,
    rng: RngSpec,
    tensors: Vec<TensorSpec>,
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(s: &str) -> Result<Vec<u8>, ModelError> {
    if s.len() % 2 != 0 {
        return Err(ModelError::Checkpoint("odd-length hex string".into()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| ModelError::Checkpoint(format!("bad hex at offset {i}")))
        })
        .collect()
}

fn ordered_tensors<'a>(params: &'a Params, opt: &'a AdamState) -> Vec<(String, &'a super::math::Mat)> {
    let mut out = Vec::new();
    for (name, _, m) in params.tensors() {
        out.push((format!("param.{name}"), m));
    }
    for (name, _, m) in opt.m.tensors() {
        out.push((format!("adamM.{name}"), m));
    }
    for (name, _, m) in opt.v.tensors() {
        out.push((format!("adamV.{name}"), m));
    }
    out
}

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<(), ModelError> {
    let tensors = ordered_tensors(&state.params, &state.opt);
    let header = Header {
        format: "helm-ckpt/1".into(),
        config: state.config.clone(),
        step: state.step,
        rng: RngSpec {
            seed: hex_encode(&state.rng.get_seed()),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        tensors: tensors
            .iter()
            .map(|(name, m)| TensorSpec {
                name: name.clone(),
                rows: m.rows,
                cols: m.cols,
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| ModelError::Checkpoint(format!("header serialization: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, m) in &tensors {
        for &v in &m.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("file too short for magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(CHECKPOINT_MAGIC)
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)
        .map_err(|_| ModelError::Checkpoint("truncated header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| ModelError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| ModelError::Checkpoint(format!("header parse: {e}")))?;
    if header.format != "helm-ckpt/1" {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format {}",
            header.format
        )));
    }
    header.config.validate()?;

    // Rebuild empty tensors and verify that recorded shapes match the config.
    let mut params = Params::zeros(&header.config);
    let mut opt = AdamState::new(&header.config);
    {
        let mut expected: Vec<(String, usize, usize)> = Vec::new();
        for (name, m) in ordered_tensors(&params, &opt) {
            expected.push((name, m.rows, m.cols));
        }
        if expected.len() != header.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} tensors recorded, config requires {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        for (spec, (name, rows, cols)) in header.tensors.iter().zip(expected) {
            if spec.name != name || spec.rows != rows || spec.cols != cols {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {} has shape {}x{}, expected {} {}x{}",
                    spec.name, spec.rows, spec.cols, name, rows, cols
                )));
            }
        }
    }

    let mut read_into = |m: &mut super::math::Mat| -> Result<(), ModelError> {
        let mut buf = vec![0u8; m.data.len() * 4];
        r.read_exact(&mut buf)
            .map_err(|_| ModelError::Checkpoint("truncated tensor payload".into()))?;
        for (i, v) in m.data.iter_mut().enumerate() {
            *v = f32::from_le_bytes(buf[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        }
        Ok(())
    };
    for (_, _, m) in params.tensors_mut() {
        read_into(m)?;
    }
    for (_, _, m) in opt.m.tensors_mut() {
        read_into(m)?;
    }
    for (_, _, m) in opt.v.tensors_mut() {
        read_into(m)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after payload".into()));
    }

    let seed_bytes = hex_decode(&header.rng.seed)?;
    let seed: [u8; 32] = seed_bytes
        .try_into()
        .map_err(|_| ModelError::Checkpoint("rng seed must be 32 bytes".into()))?;
    let word_pos: u128 = header
        .rng
        .word_pos
        .parse()
        .map_err(|_| ModelError::Checkpoint("bad rng word position".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(word_pos);

    Ok(ModelState {
        config: header.config,
        params,
        opt,
        step: header.step,
        rng,
    })
}
