//! Flat binary tensor archive: a fixed header then row-major float64
//! payload, little-endian, with a JSON sidecar carrying labels, window
//! indices and the per-band scaling records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;

use crate::error::{Error, Result};
use crate::segment::Label;
use crate::wavelet::{BandScaling, TensorDataset, TransformParams, WaveletTensor};

const MAGIC: &[u8; 4] = b"CWTA";
const VERSION: u32 = 1;

/// Sidecar contents, serialized as JSON next to the binary archive.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct Sidecar {
    version: u32,
    params: TransformParams,
    band_lengths: Vec<usize>,
    window_indices: Vec<usize>,
    labels: Vec<u8>,
    /// Per tensor, per channel, per band.
    scaling: Vec<Vec<Vec<BandScaling>>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Write the archive and its sidecar.
pub fn write_tensors(path: &Path, dataset: &TensorDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("refusing to write an empty tensor archive"));
    }
    let first = &dataset.tensors[0];
    let (channels, bands, pad) = (first.channels(), first.num_bands(), first.pad_len());

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>((bands - 1) as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(pad as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(channels as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(dataset.params.stack as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(dataset.len() as u32).map_err(io_err)?;
    for t in &dataset.tensors {
        if t.channels() != channels || t.num_bands() != bands || t.pad_len() != pad {
            return Err(Error::Shape("tensors in archive differ in shape".into()));
        }
        for &v in t.data.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;

    let sidecar = Sidecar {
        version: VERSION,
        params: dataset.params.clone(),
        band_lengths: first.band_lengths.clone(),
        window_indices: dataset.window_indices.clone(),
        labels: dataset.labels.iter().map(|l| l.as_u8()).collect(),
        scaling: dataset.tensors.iter().map(|t| t.scaling.clone()).collect(),
    };
    let sp = sidecar_path(path);
    let file = File::create(&sp).map_err(|e| Error::io(&sp, e))?;
    serde_json::to_writer(BufWriter::new(file), &sidecar)?;
    Ok(())
}

/// Read an archive written by [`write_tensors`], validating header, sizes
/// and sidecar consistency.
pub fn read_tensors(path: &Path) -> Result<TensorDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::Format(format!("tensor archive truncated: {e}"));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("tensor archive has a bad magic number".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported tensor archive version {version} (expected {VERSION})"
        )));
    }
    let levels = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let pad = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let channels = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let stack = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let bands = levels + 1;

    let sp = sidecar_path(path);
    let sidecar: Sidecar = {
        let file = File::open(&sp).map_err(|e| Error::io(&sp, e))?;
        serde_json::from_reader(BufReader::new(file))?
    };
    if sidecar.version != VERSION
        || sidecar.labels.len() != count
        || sidecar.window_indices.len() != count
        || sidecar.scaling.len() != count
        || sidecar.band_lengths.len() != bands
        || sidecar.params.stack != stack
        || sidecar.params.levels != levels
    {
        return Err(Error::Format("tensor sidecar does not match archive header".into()));
    }

    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let mut data = Array3::zeros((channels, bands, pad));
        for c in 0..channels {
            for b in 0..bands {
                for k in 0..pad {
                    data[[c, b, k]] = r.read_f64::<LittleEndian>().map_err(io_err)?;
                }
            }
        }
        if sidecar.scaling[i].len() != channels
            || sidecar.scaling[i].iter().any(|s| s.len() != bands)
        {
            return Err(Error::Format("sidecar scaling records have a bad shape".into()));
        }
        tensors.push(WaveletTensor {
            data,
            band_lengths: sidecar.band_lengths.clone(),
            scaling: sidecar.scaling[i].clone(),
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::Format("tensor archive has trailing bytes".into()));
    }

    let labels = sidecar
        .labels
        .iter()
        .map(|&b| Label::from_u8(b))
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorDataset {
        tensors,
        labels,
        window_indices: sidecar.window_indices,
        params: sidecar.params,
    })
}
