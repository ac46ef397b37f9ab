//! Model definitions (the low-complexity student and the parametric
//! teacher), embedding extraction, and binary checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{ChannelStats, FeatureTensor, SpecKind, FEAT_CHANNELS, FEAT_FRAMES, FEAT_FREQS};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Mode, Network, Tensor, TrainConfig};

pub const EMBEDDING_DIM: usize = 64;
pub const INPUT_SHAPE: [usize; 3] = [FEAT_FREQS, FEAT_FRAMES, FEAT_CHANNELS];

/// Declarative sequential model description; the single source of truth for
/// building, training, and complexity auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    /// Index of the FC(64) layer; the embedding is the activation of the
    /// ReLU that immediately follows it.
    pub embedding_layer_index: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| {
                Error::Shape(format!("{}: layer {i} does not compose: {e}", self.name))
            })?;
        }
        match self.layers.get(self.embedding_layer_index) {
            Some(LayerSpec::Dense { out_features }) if *out_features == EMBEDDING_DIM => {}
            other => {
                return Err(Error::Validation(format!(
                    "embedding layer must be Dense({EMBEDDING_DIM}), found {other:?}"
                )))
            }
        }
        if !matches!(self.layers.get(self.embedding_layer_index + 1), Some(LayerSpec::Relu)) {
            return Err(Error::Validation(
                "embedding Dense(64) must be followed by a ReLU".into(),
            ));
        }
        Ok(())
    }

    /// Index of the layer whose output is the 64-d embedding (the ReLU after
    /// the FC(64) layer, before any dropout).
    pub fn embedding_tap_index(&self) -> usize {
        self.embedding_layer_index + 1
    }

    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn build_network(&self, seed: u64) -> Result<Network> {
        self.validate()?;
        Network::build(&self.layers, &self.input_shape, seed)
    }
}

/// The 6-row low-complexity student. The third convolution outputs 16
/// channels (C_out3), reconciling with the per-student memory figure.
pub fn build_student() -> ModelSpec {
    let mut layers = Vec::new();
    let conv_block = |layers: &mut Vec<LayerSpec>, out_channels: usize, dropout: f64| {
        layers.push(LayerSpec::Conv2d { kernel: [2, 2], out_channels });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::AvgPool { pool: [2, 2] });
        layers.push(LayerSpec::Dropout { rate: dropout });
    };
    conv_block(&mut layers, 16, 0.10);
    conv_block(&mut layers, 16, 0.15);
    conv_block(&mut layers, 16, 0.20);
    layers.push(LayerSpec::Conv2d { kernel: [2, 2], out_channels: 32 });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::BatchNorm);
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(LayerSpec::Dropout { rate: 0.25 });
    let embedding_layer_index = layers.len();
    layers.push(LayerSpec::Dense { out_features: EMBEDDING_DIM });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dropout { rate: 0.30 });
    layers.push(LayerSpec::Dense { out_features: 10 });
    layers.push(LayerSpec::Softmax);
    ModelSpec {
        name: "student".into(),
        input_shape: INPUT_SHAPE,
        layers,
        embedding_layer_index,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    /// Output channels per residual block; each block halves the spatial
    /// extents with a 2x2 average pool.
    pub block_channels: Vec<usize>,
    pub kernel: [usize; 2],
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig { block_channels: vec![32, 64, 128, 256], kernel: [3, 3] }
    }
}

/// Large-footprint stand-in teacher: residual conv blocks, then the dense
/// block FC(64)+ReLU (the embedding tap) and FC(10)+Softmax.
pub fn build_teacher(config: &TeacherConfig) -> Result<ModelSpec> {
    if config.block_channels.is_empty() {
        return Err(Error::Config("teacher needs at least one block".into()));
    }
    let spatial = INPUT_SHAPE[0] >> config.block_channels.len();
    if spatial == 0 {
        return Err(Error::Config(format!(
            "{} blocks collapse the {}-pixel input below 1x1 before GAP",
            config.block_channels.len(),
            INPUT_SHAPE[0]
        )));
    }
    let mut layers = Vec::new();
    for &channels in &config.block_channels {
        layers.push(LayerSpec::Residual { kernel: config.kernel, out_channels: channels });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::AvgPool { pool: [2, 2] });
    }
    layers.push(LayerSpec::GlobalAvgPool);
    let embedding_layer_index = layers.len();
    layers.push(LayerSpec::Dense { out_features: EMBEDDING_DIM });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense { out_features: 10 });
    layers.push(LayerSpec::Softmax);
    let spec = ModelSpec {
        name: "teacher".into(),
        input_shape: INPUT_SHAPE,
        layers,
        embedding_layer_index,
    };
    spec.validate()?;
    Ok(spec)
}

/// Pack feature tensors into one [N, 128, 128, 3] network input batch.
pub fn features_to_batch(features: &[&FeatureTensor]) -> Tensor {
    let per = FEAT_FREQS * FEAT_FRAMES * FEAT_CHANNELS;
    let mut data = Vec::with_capacity(features.len() * per);
    for f in features {
        data.extend_from_slice(&f.values);
    }
    Tensor::from_vec(&[features.len(), FEAT_FREQS, FEAT_FRAMES, FEAT_CHANNELS], data)
}

/// Post-ReLU activation of the FC(64) layer in eval mode.
pub fn extract_embedding(
    net: &mut Network,
    spec: &ModelSpec,
    input: &FeatureTensor,
) -> Result<Vec<f64>> {
    let batch = features_to_batch(&[input]);
    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let outputs = net.forward_all(&batch, Mode::Eval, &mut rng)?;
    Ok(outputs[spec.embedding_tap_index()].data.clone())
}

// ---------------------------------------------------------------------------
// Checkpoints

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"KDASC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u16,
    spec: ModelSpec,
    kind: Option<SpecKind>,
    stats: ChannelStats,
    train_config: TrainConfig,
    blob_names: Vec<String>,
}

/// A model snapshot: spec, per-layer parameter blobs (f32), batchnorm
/// running stats, featurization stats, and the training config echo.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub kind: Option<SpecKind>,
    pub stats: ChannelStats,
    pub train_config: TrainConfig,
    pub blobs: Vec<(String, Vec<f32>)>,
}

impl Checkpoint {
    /// Snapshot a live network. Parameters are rounded to f32, the storage
    /// precision.
    pub fn from_network(
        spec: &ModelSpec,
        net: &mut Network,
        kind: Option<SpecKind>,
        stats: ChannelStats,
        train_config: TrainConfig,
    ) -> Checkpoint {
        let mut blobs = Vec::new();
        net.visit_state(&mut |name, tensor| {
            blobs.push((name.to_string(), tensor.data.iter().map(|&v| v as f32).collect()));
        });
        Checkpoint { spec: spec.clone(), kind, stats, train_config, blobs }
    }

    /// Rebuild a network carrying exactly this checkpoint's state.
    pub fn restore(&self) -> Result<Network> {
        let mut net = self.spec.build_network(0)?;
        let mut idx = 0usize;
        let mut failure: Option<Error> = None;
        net.visit_state(&mut |name, tensor| {
            if failure.is_some() {
                return;
            }
            match self.blobs.get(idx) {
                Some((blob_name, blob)) if blob_name == name && blob.len() == tensor.len() => {
                    for (dst, &src) in tensor.data.iter_mut().zip(blob) {
                        *dst = src as f64;
                    }
                }
                Some((blob_name, blob)) => {
                    failure = Some(Error::Checkpoint(format!(
                        "blob {idx} mismatch: expected {name} ({} values), found {blob_name} ({})",
                        tensor.len(),
                        blob.len()
                    )));
                }
                None => {
                    failure = Some(Error::Checkpoint(format!("missing blob for {name}")));
                }
            }
            idx += 1;
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if idx != self.blobs.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} extra blobs starting at {}",
                self.blobs.len() - idx,
                self.blobs[idx].0
            )));
        }
        net.mark_bn_initialized();
        Ok(net)
    }

    pub fn total_parameters(&self) -> usize {
        self.blobs
            .iter()
            .filter(|(name, _)| !name.contains("running_"))
            .map(|(_, b)| b.len())
            .sum()
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        spec: checkpoint.spec.clone(),
        kind: checkpoint.kind,
        stats: checkpoint.stats,
        train_config: checkpoint.train_config.clone(),
        blob_names: checkpoint.blobs.iter().map(|(n, _)| n.clone()).collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (name, blob) in &checkpoint.blobs {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let mut payload = Vec::with_capacity(blob.len() * 4);
        for &v in blob {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let corrupt = |offset: usize, reason: &str| Error::Corruption {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.into(),
    };
    if bytes.len() < 11 || &bytes[0..5] != CHECKPOINT_MAGIC {
        return Err(corrupt(0, "bad magic"));
    }
    let version = u16::from_le_bytes(bytes[5..7].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    let header_len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let mut pos = 11;
    if pos + header_len > bytes.len() {
        return Err(corrupt(pos, "truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[pos..pos + header_len])?;
    pos += header_len;
    let mut blobs = Vec::new();
    for expected_name in &header.blob_names {
        if pos + 4 > bytes.len() {
            return Err(corrupt(pos, "truncated blob name length"));
        }
        let name_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + name_len > bytes.len() {
            return Err(corrupt(pos, "truncated blob name"));
        }
        let name = String::from_utf8(bytes[pos..pos + name_len].to_vec())
            .map_err(|_| corrupt(pos, "blob name is not UTF-8"))?;
        pos += name_len;
        if &name != expected_name {
            return Err(corrupt(pos, "blob name does not match header"));
        }
        if pos + 8 > bytes.len() {
            return Err(corrupt(pos, "truncated blob length"));
        }
        let byte_len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        if pos + byte_len + 4 > bytes.len() {
            return Err(corrupt(pos, "truncated blob payload"));
        }
        let payload = &bytes[pos..pos + byte_len];
        pos += byte_len;
        let stored_crc = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if crc32fast::hash(payload) != stored_crc {
            return Err(corrupt(pos, "blob CRC32 mismatch"));
        }
        pos += 4;
        let blob: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blobs.push((name, blob));
    }
    Ok(Checkpoint {
        spec: header.spec,
        kind: header.kind,
        stats: header.stats,
        train_config: header.train_config,
        blobs,
    })
}
