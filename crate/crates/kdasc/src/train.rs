//! Two-phase training: teachers with mixup and cross entropy, then students
//! with an embedding-matching MSE term added to the cross entropy.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution};

use crate::audio::load_wav;
use crate::dataset::{resolve_clip_path, DatasetManifest, Split, SCENE_CLASSES};
use crate::dsp::{
    compute_stats, featurize_raw, load_feature, save_feature, standardize, ChannelStats,
    FeatureTensor, Frontend, SpecKind,
};
use crate::error::{Error, Result};
use crate::fusion::{decide_label, NUM_CLASSES};
use crate::model::{extract_embedding, features_to_batch, Checkpoint, ModelSpec, EMBEDDING_DIM};
use crate::nn::{adam_step, cross_entropy, mixup, mse, AdamState, MixupPair, Mode, Network,
    Tensor, TrainConfig};

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub label: usize,
    pub feature: FeatureTensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixupSetting {
    Off,
    /// One lambda per mixed pair, drawn from Beta(alpha, alpha).
    Beta(f64),
    /// Fixed lambda for every pair; Fixed(1.0) degenerates to no mixing.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub ce: f64,
    pub mse: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    pub eval_logloss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model_name: String,
    pub kind: SpecKind,
    pub seed: u64,
    pub config: TrainConfig,
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_eval_accuracy: f64,
    pub best_eval_logloss: f64,
    /// Set when training stopped early on a non-finite loss or gradient;
    /// the returned checkpoint is the last good one.
    pub aborted: Option<String>,
}

impl TrainReport {
    /// One tab-separated line per epoch. Deliberately excludes wall-clock so
    /// equal-seed runs produce byte-identical reports.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tce\tmse\ttrain_acc\teval_acc\teval_logloss\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{:.4}\n",
                r.epoch, r.ce, r.mse, r.train_accuracy, r.eval_accuracy, r.eval_logloss
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

fn one_hot(label: usize) -> [f64; NUM_CLASSES] {
    let mut v = [0.0; NUM_CLASSES];
    v[label] = 1.0;
    v
}

/// Eval-mode posteriors for a sample set, batched.
pub fn predict_posteriors(
    net: &mut Network,
    samples: &[TrainSample],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let feats: Vec<&FeatureTensor> = chunk.iter().map(|s| &s.feature).collect();
        let batch = features_to_batch(&feats);
        let probs = net.forward(&batch, Mode::Eval, &mut rng)?;
        for i in 0..chunk.len() {
            out.push(probs.data[i * NUM_CLASSES..(i + 1) * NUM_CLASSES].to_vec());
        }
    }
    Ok(out)
}

pub fn accuracy(posteriors: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for (p, &l) in posteriors.iter().zip(labels) {
        if decide_label(p)? == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len().max(1) as f64)
}

pub fn log_loss(posteriors: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = posteriors
        .iter()
        .zip(labels)
        .map(|(p, &l)| -p[l].clamp(1e-12, 1.0 - 1e-12).ln())
        .sum();
    total / labels.len().max(1) as f64
}

struct BestSnapshot {
    checkpoint: Checkpoint,
    epoch: usize,
    accuracy: f64,
    logloss: f64,
}

fn train_model(
    spec: &ModelSpec,
    kind: SpecKind,
    train: &[TrainSample],
    eval: &[TrainSample],
    cfg: &TrainConfig,
    stats: ChannelStats,
    mixup_setting: MixupSetting,
    embeddings: Option<&EmbeddingStore>,
) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    spec.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::Config("both train and eval splits must be nonempty".into()));
    }
    if let MixupSetting::Beta(a) = mixup_setting {
        if a <= 0.0 {
            return Err(Error::Config("mixup alpha must be positive".into()));
        }
    }
    if let Some(store) = embeddings {
        let missing: Vec<String> = train
            .iter()
            .filter(|s| store.get(&s.id).is_none())
            .map(|s| s.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
    }
    let (w_ce, w_mse) = cfg.loss_weights;
    let tap = spec.embedding_tap_index();
    let mut net = spec.build_network(cfg.seed)?;
    let mut adam = AdamState::new();
    let adam_cfg = cfg.adam_config();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    // separate stream so toggling mixup cannot perturb shuffles or dropout
    let mut mix_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let eval_labels: Vec<usize> = eval.iter().map(|s| s.label).collect();

    let mut rows: Vec<EpochRow> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<BestSnapshot> = None;
    let mut aborted = None;
    let feat_len = train[0].feature.values.len();

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut ce_sum = 0.0;
        let mut mse_sum = 0.0;
        let mut correct = 0usize;
        for batch_idx in order.chunks(cfg.batch_size) {
            let b = batch_idx.len();
            let mut inputs = Tensor::zeros(&[b, 128, 128, 3]);
            let mut targets = Tensor::zeros(&[b, NUM_CLASSES]);
            match mixup_setting {
                MixupSetting::Off => {
                    for (i, &s) in batch_idx.iter().enumerate() {
                        inputs.data[i * feat_len..(i + 1) * feat_len]
                            .copy_from_slice(&train[s].feature.values);
                        targets.data[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
                            .copy_from_slice(&one_hot(train[s].label));
                    }
                }
                _ => {
                    let mut partners = batch_idx.to_vec();
                    partners.shuffle(&mut mix_rng);
                    for (i, (&s, &p)) in batch_idx.iter().zip(&partners).enumerate() {
                        let lambda = match mixup_setting {
                            MixupSetting::Fixed(l) => l,
                            MixupSetting::Beta(a) => {
                                Beta::new(a, a).unwrap().sample(&mut mix_rng)
                            }
                            MixupSetting::Off => unreachable!(),
                        };
                        let pair = MixupPair {
                            lambda,
                            inputs: (&train[s].feature.values, &train[p].feature.values),
                            targets: (&one_hot(train[s].label), &one_hot(train[p].label)),
                        };
                        let (mx, my) = mixup(&pair)?;
                        inputs.data[i * feat_len..(i + 1) * feat_len].copy_from_slice(&mx);
                        targets.data[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
                            .copy_from_slice(&my);
                    }
                }
            }
            let outputs = match net.forward_all(&inputs, Mode::Train, &mut rng) {
                Ok(o) => o,
                Err(e) => {
                    if best.is_some() {
                        aborted = Some(format!("epoch {epoch}: {e}"));
                        break 'epochs;
                    }
                    return Err(e);
                }
            };
            let probs = outputs.last().unwrap();
            let (ce_loss, ce_grad) = cross_entropy(probs, &targets)?;
            let mut grad_out = ce_grad;
            for g in &mut grad_out.data {
                *g *= w_ce;
            }
            let (mse_loss, inject) = match embeddings {
                Some(store) => {
                    let mut target_emb = Tensor::zeros(&[b, EMBEDDING_DIM]);
                    for (i, &s) in batch_idx.iter().enumerate() {
                        let v = store.get(&train[s].id).unwrap();
                        for (dst, &src) in target_emb.data
                            [i * EMBEDDING_DIM..(i + 1) * EMBEDDING_DIM]
                            .iter_mut()
                            .zip(v)
                        {
                            *dst = src as f64;
                        }
                    }
                    let (loss, mut grad) = mse(&outputs[tap], &target_emb)?;
                    for g in &mut grad.data {
                        *g *= w_mse;
                    }
                    (loss, Some(grad))
                }
                None => (0.0, None),
            };
            let total = w_ce * ce_loss + w_mse * mse_loss;
            if !total.is_finite() {
                if best.is_some() {
                    aborted = Some(format!("epoch {epoch}: non-finite loss {total}"));
                    break 'epochs;
                }
                return Err(Error::NonFinite {
                    quantity: "loss".into(),
                    layer: "output".into(),
                    step: adam.step + 1,
                });
            }
            let inject_ref = inject.as_ref().map(|g| (tap, g));
            if let Err(e) = net
                .backward(&grad_out, inject_ref)
                .and_then(|_| adam_step(&mut net, &mut adam, &adam_cfg))
            {
                if best.is_some() {
                    aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                return Err(e);
            }
            ce_sum += ce_loss * b as f64;
            mse_sum += mse_loss * b as f64;
            for (i, &s) in batch_idx.iter().enumerate() {
                let row = &probs.data[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
                if decide_label(row)? == train[s].label {
                    correct += 1;
                }
            }
        }
        let posteriors = predict_posteriors(&mut net, eval, cfg.batch_size)?;
        let eval_acc = accuracy(&posteriors, &eval_labels)?;
        let eval_ll = log_loss(&posteriors, &eval_labels);
        rows.push(EpochRow {
            epoch,
            ce: ce_sum / train.len() as f64,
            mse: mse_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            eval_accuracy: eval_acc,
            eval_logloss: eval_ll,
        });
        let better = match &best {
            None => true,
            Some(b) => {
                eval_acc > b.accuracy || (eval_acc == b.accuracy && eval_ll < b.logloss)
            }
        };
        if better {
            best = Some(BestSnapshot {
                checkpoint: Checkpoint::from_network(
                    spec,
                    &mut net,
                    Some(kind),
                    stats,
                    cfg.clone(),
                ),
                epoch,
                accuracy: eval_acc,
                logloss: eval_ll,
            });
        }
    }
    let best = best.ok_or_else(|| Error::Config("no epochs ran".into()))?;
    let report = TrainReport {
        model_name: spec.name.clone(),
        kind,
        seed: cfg.seed,
        config: cfg.clone(),
        rows,
        best_epoch: best.epoch,
        best_eval_accuracy: best.accuracy,
        best_eval_logloss: best.logloss,
        aborted,
    };
    Ok((best.checkpoint, report))
}

/// Phase I: cross entropy on mixup-mixed targets; best-eval checkpoint kept.
pub fn train_teacher(
    spec: &ModelSpec,
    kind: SpecKind,
    train: &[TrainSample],
    eval: &[TrainSample],
    cfg: &TrainConfig,
    stats: ChannelStats,
) -> Result<(Checkpoint, TrainReport)> {
    let setting = match cfg.mixup_alpha {
        Some(a) => MixupSetting::Beta(a),
        None => MixupSetting::Off,
    };
    train_teacher_with_mixup(spec, kind, train, eval, cfg, stats, setting)
}

pub fn train_teacher_with_mixup(
    spec: &ModelSpec,
    kind: SpecKind,
    train: &[TrainSample],
    eval: &[TrainSample],
    cfg: &TrainConfig,
    stats: ChannelStats,
    setting: MixupSetting,
) -> Result<(Checkpoint, TrainReport)> {
    let mut cfg = cfg.clone();
    cfg.loss_weights = (1.0, 0.0);
    train_model(spec, kind, train, eval, &cfg, stats, setting, None)
}

/// Phase II: cross entropy plus embedding-matching MSE, no mixup.
pub fn train_student(
    spec: &ModelSpec,
    kind: SpecKind,
    train: &[TrainSample],
    eval: &[TrainSample],
    cfg: &TrainConfig,
    stats: ChannelStats,
    embeddings: &EmbeddingStore,
) -> Result<(Checkpoint, TrainReport)> {
    train_model(spec, kind, train, eval, cfg, stats, MixupSetting::Off, Some(embeddings))
}

// ---------------------------------------------------------------------------
// Embedding store

pub const EMBEDDING_MAGIC: &[u8; 8] = b"KDASCEM\0";
pub const EMBEDDING_VERSION: u16 = 1;

/// Frozen teacher embeddings keyed by sample id, for one spectrogram kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub kind: SpecKind,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(kind: SpecKind) -> Self {
        EmbeddingStore { kind, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: &str, vector: Vec<f32>) -> Result<()> {
        if vector.len() != EMBEDDING_DIM {
            return Err(Error::Shape(format!(
                "embedding for {id} has {} values, expected {EMBEDDING_DIM}",
                vector.len()
            )));
        }
        if vector.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "embedding for {id} has non-finite or negative values"
            )));
        }
        if self.entries.insert(id.to_string(), vector).is_some() {
            return Err(Error::DuplicateEntry(id.to_string()));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    /// Records (id length-prefixed, kind byte, 64 f32 LE), then a trailing
    /// record count and CRC32 of the record bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records = Vec::new();
        for (id, vector) in &self.entries {
            records.extend_from_slice(&(id.len() as u32).to_le_bytes());
            records.extend_from_slice(id.as_bytes());
            records.push(self.kind.code());
            for &v in vector {
                records.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(records.len() + 22);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&records);
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&records).to_le_bytes());
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingStore> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let corrupt = |offset: usize, reason: &str| Error::Corruption {
            path: path.to_path_buf(),
            offset: offset as u64,
            reason: reason.into(),
        };
        if bytes.len() < 22 || &bytes[0..8] != EMBEDDING_MAGIC {
            return Err(corrupt(0, "bad magic"));
        }
        let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
        if version != EMBEDDING_VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: EMBEDDING_VERSION });
        }
        let trailer = bytes.len() - 12;
        let records = &bytes[10..trailer];
        let count = u64::from_le_bytes(bytes[trailer..trailer + 8].try_into().unwrap());
        let crc = u32::from_le_bytes(bytes[trailer + 8..].try_into().unwrap());
        if crc32fast::hash(records) != crc {
            return Err(corrupt(trailer + 8, "record CRC32 mismatch"));
        }
        let mut pos = 0usize;
        let mut kind: Option<SpecKind> = None;
        let mut entries = BTreeMap::new();
        while pos < records.len() {
            if pos + 4 > records.len() {
                return Err(corrupt(10 + pos, "truncated record"));
            }
            let id_len = u32::from_le_bytes(records[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            let need = id_len + 1 + EMBEDDING_DIM * 4;
            if pos + need > records.len() {
                return Err(corrupt(10 + pos, "truncated record"));
            }
            let id = String::from_utf8(records[pos..pos + id_len].to_vec())
                .map_err(|_| corrupt(10 + pos, "sample id is not UTF-8"))?;
            pos += id_len;
            let k = SpecKind::from_code(records[pos])
                .ok_or_else(|| corrupt(10 + pos, "unknown spectrogram kind byte"))?;
            pos += 1;
            match kind {
                None => kind = Some(k),
                Some(existing) if existing != k => {
                    return Err(corrupt(10 + pos, "mixed spectrogram kinds in one store"));
                }
                _ => {}
            }
            let vector: Vec<f32> = records[pos..pos + EMBEDDING_DIM * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += EMBEDDING_DIM * 4;
            entries.insert(id, vector);
        }
        if entries.len() as u64 != count {
            return Err(corrupt(trailer, "record count mismatch"));
        }
        let kind = kind.ok_or_else(|| corrupt(10, "store has no records"))?;
        Ok(EmbeddingStore { kind, entries })
    }
}

/// Eval-mode teacher embeddings for every sample, one record each.
pub fn extract_all_embeddings(
    teacher: &Checkpoint,
    kind: SpecKind,
    samples: &[TrainSample],
) -> Result<EmbeddingStore> {
    let mut net = teacher.restore()?;
    let mut store = EmbeddingStore::new(kind);
    for sample in samples {
        let emb = extract_embedding(&mut net, &teacher.spec, &sample.feature)?;
        store.insert(&sample.id, emb.iter().map(|&v| v as f32).collect())?;
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Dataset plumbing and full-pipeline orchestration

/// Featurized train/eval splits for one spectrogram kind, standardized with
/// statistics computed on the train split only.
#[derive(Debug, Clone)]
pub struct KindData {
    pub kind: SpecKind,
    pub stats: ChannelStats,
    pub train: Vec<TrainSample>,
    pub eval: Vec<TrainSample>,
}

fn cache_file_name(clip_path: &str) -> String {
    let safe: String = clip_path
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.feat")
}

fn raw_feature(
    entry_path: &str,
    manifest_path: &Path,
    frontend: &Frontend,
    kind_cache: Option<&Path>,
) -> Result<FeatureTensor> {
    let cached = kind_cache.map(|d| d.join(cache_file_name(entry_path)));
    match &cached {
        Some(p) if p.exists() => load_feature(p),
        _ => {
            let clip = load_wav(&resolve_clip_path(manifest_path, entry_path))?;
            let t = featurize_raw(&clip, frontend.kind, &frontend.bank)?;
            if let Some(p) = &cached {
                save_feature(p, &t)?;
            }
            Ok(t)
        }
    }
}

/// Featurize one split under externally supplied standardization statistics
/// (for evaluating against a checkpoint trained elsewhere).
pub fn prepare_split(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    kind: SpecKind,
    split: Split,
    stats: &ChannelStats,
    cache_dir: Option<&Path>,
) -> Result<Vec<TrainSample>> {
    manifest.validate()?;
    let frontend = Frontend::new(kind)?;
    let kind_cache = cache_dir.map(|d| d.join(kind.as_str()));
    if let Some(dir) = &kind_cache {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.split == split) {
        let label = SCENE_CLASSES
            .iter()
            .position(|&c| c == entry.scene_label)
            .ok_or_else(|| Error::Validation(format!("unknown label {}", entry.scene_label)))?;
        let mut tensor =
            raw_feature(&entry.clip_path, manifest_path, &frontend, kind_cache.as_deref())?;
        standardize(&mut tensor, stats);
        out.push(TrainSample { id: entry.clip_path.clone(), label, feature: tensor });
    }
    Ok(out)
}

/// Featurize every manifest clip for one kind. Raw (pre-standardization)
/// tensors are cached under `cache_dir/<kind>/` when given.
pub fn prepare_kind_data(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    kind: SpecKind,
    cache_dir: Option<&Path>,
) -> Result<KindData> {
    manifest.validate()?;
    let frontend = Frontend::new(kind)?;
    let kind_cache = cache_dir.map(|d| d.join(kind.as_str()));
    if let Some(dir) = &kind_cache {
        std::fs::create_dir_all(dir)?;
    }
    let mut raw: Vec<(String, usize, Split, FeatureTensor)> = Vec::new();
    for entry in &manifest.entries {
        let label = SCENE_CLASSES
            .iter()
            .position(|&c| c == entry.scene_label)
            .ok_or_else(|| Error::Validation(format!("unknown label {}", entry.scene_label)))?;
        let tensor =
            raw_feature(&entry.clip_path, manifest_path, &frontend, kind_cache.as_deref())?;
        raw.push((entry.clip_path.clone(), label, entry.split, tensor));
    }
    let stats = compute_stats(
        raw.iter().filter(|(_, _, s, _)| *s == Split::Train).map(|(_, _, _, t)| t),
    );
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (id, label, split, mut tensor) in raw {
        standardize(&mut tensor, &stats);
        if !tensor.is_finite() {
            return Err(Error::Validation(format!("non-finite feature for {id}")));
        }
        let sample = TrainSample { id, label, feature: tensor };
        match split {
            Split::Train => train.push(sample),
            Split::Eval => eval.push(sample),
        }
    }
    Ok(KindData { kind, stats, train, eval })
}

/// Everything one spectrogram pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub kind: SpecKind,
    pub teacher: Checkpoint,
    pub teacher_report: TrainReport,
    pub embeddings: EmbeddingStore,
    pub student: Checkpoint,
    pub student_report: TrainReport,
}

/// Run both phases for one kind: teacher, embedding extraction, student.
pub fn train_one_kind(
    data: &KindData,
    teacher_spec: &ModelSpec,
    student_spec: &ModelSpec,
    teacher_cfg: &TrainConfig,
    student_cfg: &TrainConfig,
) -> Result<PipelineArtifacts> {
    let (teacher, teacher_report) = train_teacher(
        teacher_spec,
        data.kind,
        &data.train,
        &data.eval,
        teacher_cfg,
        data.stats,
    )?;
    let embeddings = extract_all_embeddings(&teacher, data.kind, &data.train)?;
    let (student, student_report) = train_student(
        student_spec,
        data.kind,
        &data.train,
        &data.eval,
        student_cfg,
        data.stats,
        &embeddings,
    )?;
    Ok(PipelineArtifacts {
        kind: data.kind,
        teacher,
        teacher_report,
        embeddings,
        student,
        student_report,
    })
}

/// Run all kind pipelines sequentially. Per-kind seeds come from
/// `kind_seeds` (teacher) with the student at seed + 1, so one kind's seed
/// can change without touching the others. Failures are reported per kind;
/// completed pipelines are preserved.
pub fn train_all(
    data: &[KindData],
    teacher_spec: &ModelSpec,
    student_spec: &ModelSpec,
    teacher_cfg: &TrainConfig,
    student_cfg: &TrainConfig,
    kind_seeds: &[u64],
) -> Result<Vec<(SpecKind, Result<PipelineArtifacts>)>> {
    if kind_seeds.len() != data.len() {
        return Err(Error::Config(format!(
            "{} kind seeds for {} pipelines",
            kind_seeds.len(),
            data.len()
        )));
    }
    let mut results = Vec::new();
    for (kd, &seed) in data.iter().zip(kind_seeds) {
        let mut t_cfg = teacher_cfg.clone();
        t_cfg.seed = seed;
        let mut s_cfg = student_cfg.clone();
        s_cfg.seed = seed + 1;
        results.push((kd.kind, train_one_kind(kd, teacher_spec, student_spec, &t_cfg, &s_cfg)));
    }
    Ok(results)
}
