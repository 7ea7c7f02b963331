//! File formats: a JSON header next to a raw little-endian `f32` payload, and
//! JSON arrays of per-frame box / landmark records.
//!
//! A tensor stored as `name.json` keeps its payload in `name.bin` unless the
//! header names another file in `payload`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::{FaceBox, RawAudioFeatures};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dims: Vec<usize>,
    pub dtype: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl TensorHeader {
    pub fn plain(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            dtype: "f32".into(),
            layout: "row-major".into(),
            rate_hz: None,
            stages: None,
            payload: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.dtype != "f32" {
            return Err(Error::Input(format!("unsupported dtype {}", self.dtype)));
        }
        if self.layout != "row-major" {
            return Err(Error::Input(format!("unsupported layout {}", self.layout)));
        }
        Ok(())
    }
}

/// One named tensor inside a multi-tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub name: String,
    pub dims: Vec<usize>,
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub dtype: String,
    pub layout: String,
    pub tensors: Vec<BundleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

pub fn payload_path(header_path: &Path, named: Option<&str>) -> PathBuf {
    match named {
        Some(name) => header_path.with_file_name(name),
        None => header_path.with_extension("bin"),
    }
}

fn encode_f32(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

fn decode_f32(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Input(format!(
            "{}: payload length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_tensor_with_header(path: &Path, tensor: &Tensor, mut header: TensorHeader) -> Result<()> {
    header.dims = tensor.dims().to_vec();
    let payload = payload_path(path, header.payload.as_deref());
    write_json(path, &header)?;
    write_file(&payload, &encode_f32(tensor.data()))
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_tensor_with_header(path, tensor, TensorHeader::plain(tensor.dims()))
}

pub fn read_tensor(path: &Path) -> Result<(TensorHeader, Tensor)> {
    let header: TensorHeader = read_json(path)?;
    header.check()?;
    let payload = payload_path(path, header.payload.as_deref());
    let data = decode_f32(&read_file(&payload)?, &payload)?;
    let tensor = Tensor::new(&header.dims, data)?;
    Ok((header, tensor))
}

/// Stores raw audio features as one `[stages × n_tokens × c_stage]` tensor.
pub fn write_audio_features(path: &Path, raw: &RawAudioFeatures) -> Result<()> {
    raw.validate()?;
    let c_stage = raw.stages[0].dim(1);
    if raw.stages.iter().any(|s| s.dim(1) != c_stage) {
        return Err(Error::Input("stages of unequal width cannot share one file".into()));
    }
    let parts: Vec<&Tensor> = raw.stages.iter().collect();
    let stacked = Tensor::concat_leading(&parts)?.reshape(&[
        raw.stages.len(),
        raw.n_tokens(),
        c_stage,
    ])?;
    let mut header = TensorHeader::plain(stacked.dims());
    header.rate_hz = Some(raw.rate_hz);
    header.stages = Some(raw.stages.len());
    write_tensor_with_header(path, &stacked, header)
}

pub fn read_audio_features(path: &Path) -> Result<RawAudioFeatures> {
    let (header, tensor) = read_tensor(path)?;
    let rate_hz = header
        .rate_hz
        .ok_or_else(|| Error::Input(format!("{}: header lacks rate_hz", path.display())))?;
    tensor.expect_rank(3, "audio feature file")?;
    let stages = header.stages.unwrap_or(tensor.dim(0));
    if stages != tensor.dim(0) {
        return Err(Error::dim("audio stages", stages, tensor.dim(0)));
    }
    let stages = (0..stages).map(|s| tensor.index(s)).collect();
    RawAudioFeatures::new(rate_hz, stages)
}

pub fn write_bundle(path: &Path, named: &[(String, &Tensor)], meta: serde_json::Value) -> Result<()> {
    let mut entries = Vec::with_capacity(named.len());
    let mut data = Vec::new();
    for (name, t) in named {
        entries.push(BundleEntry {
            name: name.clone(),
            dims: t.dims().to_vec(),
            offset: data.len(),
        });
        data.extend_from_slice(t.data());
    }
    let header = BundleHeader {
        dtype: "f32".into(),
        layout: "row-major".into(),
        tensors: entries,
        payload: None,
        meta,
    };
    write_json(path, &header)?;
    write_file(&payload_path(path, None), &encode_f32(&data))
}

pub fn read_bundle(path: &Path) -> Result<(BundleHeader, Vec<(String, Tensor)>)> {
    let header: BundleHeader = read_json(path)?;
    if header.dtype != "f32" || header.layout != "row-major" {
        return Err(Error::Input("bundle must be f32 row-major".into()));
    }
    let payload = payload_path(path, header.payload.as_deref());
    let data = decode_f32(&read_file(&payload)?, &payload)?;
    let mut out = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let n: usize = e.dims.iter().product();
        let slice = data.get(e.offset..e.offset + n).ok_or_else(|| {
            Error::Input(format!("bundle entry {} overruns the payload", e.name))
        })?;
        out.push((e.name.clone(), Tensor::new(&e.dims, slice.to_vec())?));
    }
    Ok((header, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub frame: usize,
    #[serde(flatten)]
    pub rect: FaceBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub frame: usize,
    pub points: Vec<[f64; 2]>,
}

/// Reads box records and returns them ordered by frame.
pub fn read_boxes(path: &Path) -> Result<Vec<FaceBox>> {
    let mut recs: Vec<BoxRecord> = read_json(path)?;
    recs.sort_by_key(|r| r.frame);
    recs.into_iter()
        .map(|r| {
            r.rect.validate()?;
            Ok(r.rect)
        })
        .collect()
}

pub fn read_landmarks(path: &Path) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut recs: Vec<LandmarkRecord> = read_json(path)?;
    recs.sort_by_key(|r| r.frame);
    Ok(recs.into_iter().map(|r| r.points).collect())
}
