//! Model and dataset container files.
//!
//! Both formats are a magic tag, a little-endian u32 header length, a JSON
//! header, and raw little-endian IEEE-754 f64 blobs. Model blobs are stored
//! row-major, layer order input to output, weights before biases. Round trips
//! are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{FalNetParams, ModelMetadata, MODEL_FORMAT_VERSION};

const MODEL_MAGIC: &[u8; 8] = b"FALNET\x00\x01";
const DATASET_MAGIC: &[u8; 8] = b"LAMPDS\x00\x01";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    layer_dims: [usize; 4],
    activations: Vec<String>,
    metadata: ModelMetadata,
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::ModelFormat(format!("truncated {what}: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_model(params: &FalNetParams, path: &Path) -> Result<()> {
    params.validate()?;
    let header = ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        layer_dims: params.layer_dims,
        activations: vec!["tanh".into(), "tanh".into(), "sigmoid".into()],
        metadata: params.metadata.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::ModelFormat(format!("header encode: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for l in 0..3 {
        write_f64s(&mut w, params.weights[l].iter().cloned())?;
        write_f64s(&mut w, params.biases[l].iter().cloned())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FalNetParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::ModelFormat(format!("truncated magic: {e}")))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|e| Error::ModelFormat(format!("truncated header length: {e}")))?;
    let mut header_json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_json)
        .map_err(|e| Error::ModelFormat(format!("truncated header: {e}")))?;
    let header: ModelHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::ModelFormat(format!("header decode: {e}")))?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.activations != ["tanh", "tanh", "sigmoid"] {
        return Err(Error::ModelFormat(format!(
            "unsupported activations {:?}",
            header.activations
        )));
    }
    let dims = header.layer_dims;
    let mut weights = Vec::with_capacity(3);
    let mut biases = Vec::with_capacity(3);
    for l in 0..3 {
        let (fan_out, fan_in) = (dims[l + 1], dims[l]);
        let w = read_f64s(&mut r, fan_out * fan_in, "weights")?;
        weights.push(
            Array2::from_shape_vec((fan_out, fan_in), w)
                .map_err(|e| Error::ModelFormat(e.to_string()))?,
        );
        biases.push(Array1::from_vec(read_f64s(&mut r, fan_out, "biases")?));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::ModelFormat("trailing bytes after weights".into()));
    }
    let params = FalNetParams {
        layer_dims: dims,
        weights,
        biases,
        metadata: header.metadata,
    };
    params.validate()?;
    Ok(params)
}

/// Provenance header of a training dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub n_devices: usize,
    pub pilot_length: usize,
    pub activity_prob: f64,
    pub snr_db: f64,
    pub quant_bits: Option<u32>,
    pub seed: u64,
    pub pilot_seed: Option<u64>,
    pub amp_iterations: usize,
    pub trials: u64,
    pub config_fingerprint: String,
}

/// In-memory dataset: one row per trial.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    /// trials x (2M+N)
    pub features: Array2<f64>,
    /// trials x N
    pub labels: Array2<f64>,
}

impl Dataset {
    pub fn feature_len(&self) -> usize {
        2 * self.header.pilot_length + self.header.n_devices
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let feat_len = dataset.feature_len();
    if dataset.features.ncols() != feat_len || dataset.labels.ncols() != dataset.header.n_devices {
        return Err(Error::DatasetFormat(format!(
            "row widths ({}, {}) do not match header ({}, {})",
            dataset.features.ncols(),
            dataset.labels.ncols(),
            feat_len,
            dataset.header.n_devices
        )));
    }
    let header_json = serde_json::to_vec(&dataset.header)
        .map_err(|e| Error::DatasetFormat(format!("header encode: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for (f, l) in dataset
        .features
        .outer_iter()
        .zip(dataset.labels.outer_iter())
    {
        write_f64s(&mut w, f.iter().cloned())?;
        write_f64s(&mut w, l.iter().cloned())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::DatasetFormat(format!("truncated magic: {e}")))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::DatasetFormat("not a dataset file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|e| Error::DatasetFormat(format!("truncated header length: {e}")))?;
    let mut header_json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_json)
        .map_err(|e| Error::DatasetFormat(format!("truncated header: {e}")))?;
    let header: DatasetHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::DatasetFormat(format!("header decode: {e}")))?;
    let feat_len = 2 * header.pilot_length + header.n_devices;
    let rows = header.trials as usize;
    let mut features = Vec::with_capacity(rows * feat_len);
    let mut labels = Vec::with_capacity(rows * header.n_devices);
    for i in 0..rows {
        let f = read_f64s(&mut r, feat_len, &format!("features of row {i}"))
            .map_err(|_| Error::DatasetFormat(format!("truncated at row {i}")))?;
        let l = read_f64s(&mut r, header.n_devices, &format!("labels of row {i}"))
            .map_err(|_| Error::DatasetFormat(format!("truncated at row {i}")))?;
        features.extend(f);
        labels.extend(l);
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::DatasetFormat("trailing bytes after rows".into()));
    }
    Ok(Dataset {
        features: Array2::from_shape_vec((rows, feat_len), features)
            .map_err(|e| Error::DatasetFormat(e.to_string()))?,
        labels: Array2::from_shape_vec((rows, header.n_devices), labels)
            .map_err(|e| Error::DatasetFormat(e.to_string()))?,
        header,
    })
}
