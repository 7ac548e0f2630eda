//! Versioned model container: magic, version, JSON metadata (config snapshot,
//! input shape, training history), shape table, little-endian float64
//! parameters, and a SHA-256 checksum over everything before it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{build_specs, CnnConfig, CnnModel, EpochStats};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CRNM";
const VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct Metadata {
    config: CnnConfig,
    input_shape: (usize, usize, usize),
    training_history: Vec<EpochStats>,
}

pub fn save_model(path: &Path, model: &CnnModel) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION).unwrap();

    let meta = serde_json::to_vec(&Metadata {
        config: model.config.clone(),
        input_shape: model.input_shape,
        training_history: model.training_history.clone(),
    })?;
    buf.write_u32::<LittleEndian>(meta.len() as u32).unwrap();
    buf.extend_from_slice(&meta);

    buf.write_u32::<LittleEndian>(model.specs.len() as u32).unwrap();
    for spec in &model.specs {
        let name = spec.name.as_bytes();
        buf.write_u32::<LittleEndian>(name.len() as u32).unwrap();
        buf.extend_from_slice(name);
        buf.write_u32::<LittleEndian>(spec.shape.len() as u32).unwrap();
        for &d in &spec.shape {
            buf.write_u32::<LittleEndian>(d as u32).unwrap();
        }
    }
    buf.write_u64::<LittleEndian>(model.params.len() as u64).unwrap();
    for &p in &model.params {
        buf.write_f64::<LittleEndian>(p).unwrap();
    }

    let checksum = Sha256::digest(&buf);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.write_all(&checksum).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CnnModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 + 8 {
        return Err(Error::Format("model container too short".into()));
    }
    let (body, stored_sum) = bytes.split_at(bytes.len() - 32);
    let computed = Sha256::digest(body);
    if computed.as_slice() != stored_sum {
        return Err(Error::Format("model container checksum mismatch".into()));
    }

    let mut r = body;
    let io_err = |e: std::io::Error| Error::Format(format!("model container truncated: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("model container has a bad magic number".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported model container version {version} (expected {VERSION})"
        )));
    }
    let meta_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    if r.len() < meta_len {
        return Err(Error::Format("model container metadata truncated".into()));
    }
    let (meta_bytes, rest) = r.split_at(meta_len);
    let meta: Metadata = serde_json::from_slice(meta_bytes)?;
    r = rest;

    let spec_count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut names_shapes = Vec::with_capacity(spec_count);
    for _ in 0..spec_count {
        let name_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        if r.len() < name_len {
            return Err(Error::Format("model container shape table truncated".into()));
        }
        let (name_bytes, rest) = r.split_at(name_len);
        let name = String::from_utf8(name_bytes.to_vec())
            .map_err(|_| Error::Format("bad parameter name".into()))?;
        r = rest;
        let ndim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>().map_err(io_err)? as usize);
        }
        names_shapes.push((name, shape));
    }
    let param_count = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        params.push(r.read_f64::<LittleEndian>().map_err(io_err)?);
    }
    if !r.is_empty() {
        return Err(Error::Format("model container has trailing bytes".into()));
    }

    // the shape table must agree with what the config implies
    let specs = build_specs(&meta.config, meta.input_shape.0);
    if specs.len() != names_shapes.len()
        || specs
            .iter()
            .zip(&names_shapes)
            .any(|(s, (n, sh))| &s.name != n || &s.shape != sh)
    {
        return Err(Error::Format(
            "model shape table does not match its config snapshot".into(),
        ));
    }
    let total: usize = specs.iter().map(|s| s.len()).sum();
    if total != params.len() {
        return Err(Error::Format(format!(
            "parameter count {} does not match shape table total {total}",
            params.len()
        )));
    }

    Ok(CnnModel {
        config: meta.config,
        input_shape: meta.input_shape,
        specs,
        params,
        training_history: meta.training_history,
    })
}
