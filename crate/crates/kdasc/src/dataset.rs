//! Dataset manifests carrying per-clip device/city/split metadata, plus a
//! deterministic synthetic 10-class dataset generator so the whole pipeline
//! runs at desk scale without the real corpus.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{save_wav, AudioClip};
use crate::error::{Error, Result};

/// The closed 10-class scene set, in listing order. The index of a class in
/// this array is its stable class index everywhere in the toolkit.
pub const SCENE_CLASSES: [&str; 10] = [
    "airport",
    "shopping_mall",
    "metro_station",
    "street_pedestrian",
    "public_square",
    "street_traffic",
    "tram",
    "bus",
    "metro",
    "park",
];

pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceId {
    A,
    B,
    C,
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    Synth,
}

impl DeviceId {
    pub fn parse(s: &str) -> Option<DeviceId> {
        Some(match s {
            "A" => DeviceId::A,
            "B" => DeviceId::B,
            "C" => DeviceId::C,
            "S1" => DeviceId::S1,
            "S2" => DeviceId::S2,
            "S3" => DeviceId::S3,
            "S4" => DeviceId::S4,
            "S5" => DeviceId::S5,
            "S6" => DeviceId::S6,
            "SYNTH" => DeviceId::Synth,
            _ => return None,
        })
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeviceId::A => "A",
            DeviceId::B => "B",
            DeviceId::C => "C",
            DeviceId::S1 => "S1",
            DeviceId::S2 => "S2",
            DeviceId::S3 => "S3",
            DeviceId::S4 => "S4",
            DeviceId::S5 => "S5",
            DeviceId::S6 => "S6",
            DeviceId::Synth => "SYNTH",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "TRAIN" => Some(Split::Train),
            "EVAL" => Some(Split::Eval),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Eval => "EVAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_path: String,
    pub scene_label: String,
    pub device_id: DeviceId,
    pub city: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            entries,
            class_names: SCENE_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == label)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<(&str, Split)> = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if self.class_index(&e.scene_label).is_none() {
                return Err(Error::ManifestSchema {
                    line: i + 2,
                    reason: format!("unknown scene label {:?}", e.scene_label),
                });
            }
            if !seen.insert((e.clip_path.as_str(), e.split)) {
                return Err(Error::DuplicateEntry(e.clip_path.clone()));
            }
        }
        Ok(())
    }
}

const MANIFEST_HEADER: &str = "clip_path\tscene_label\tdevice_id\tcity\tsplit";

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for e in &manifest.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.clip_path, e.scene_label, e.device_id, e.city, e.split.as_str()
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line != MANIFEST_HEADER {
                return Err(Error::ManifestSchema {
                    line: 1,
                    reason: format!("bad header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::ManifestSchema {
                line: lineno + 1,
                reason: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let schema = |reason: String| Error::ManifestSchema { line: lineno + 1, reason };
        if !SCENE_CLASSES.contains(&fields[1]) {
            return Err(schema(format!("unknown scene label {:?}", fields[1])));
        }
        let device_id = DeviceId::parse(fields[2])
            .ok_or_else(|| schema(format!("unknown device id {:?}", fields[2])))?;
        let split = Split::parse(fields[4])
            .ok_or_else(|| schema(format!("unknown split {:?}", fields[4])))?;
        entries.push(ManifestEntry {
            clip_path: fields[0].to_string(),
            scene_label: fields[1].to_string(),
            device_id,
            city: fields[3].to_string(),
            split,
        });
    }
    let manifest = DatasetManifest::new(entries);
    manifest.validate()?;
    Ok(manifest)
}

/// Per-class texture parameters: a tonal carrier with amplitude modulation
/// plus band-passed noise. Bands are spread across the spectrum so average
/// band energies already separate the classes.
struct ClassTexture {
    tone_hz: f64,
    am_hz: f64,
    noise_center_hz: f64,
}

fn class_texture(class: usize) -> ClassTexture {
    const PARAMS: [(f64, f64, f64); 10] = [
        (220.0, 2.0, 500.0),
        (440.0, 4.0, 1000.0),
        (880.0, 6.0, 2000.0),
        (1320.0, 8.0, 3000.0),
        (1760.0, 3.0, 4500.0),
        (2500.0, 5.0, 6000.0),
        (3500.0, 7.0, 8000.0),
        (5000.0, 2.5, 10000.0),
        (7000.0, 4.5, 13000.0),
        (9500.0, 6.5, 16000.0),
    ];
    let (tone_hz, am_hz, noise_center_hz) = PARAMS[class];
    ClassTexture { tone_hz, am_hz, noise_center_hz }
}

/// RBJ constant-peak-gain bandpass biquad.
fn bandpass(samples: &[f64], center_hz: f64, q: f64, sample_rate: f64) -> Vec<f64> {
    let w0 = 2.0 * std::f64::consts::PI * center_hz / sample_rate;
    let alpha = w0.sin() / (2.0 * q);
    let (b0, b1, b2) = (alpha, 0.0, -alpha);
    let (a0, a1, a2) = (1.0 + alpha, -2.0 * w0.cos(), 1.0 - alpha);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    samples
        .iter()
        .map(|&x| {
            let y = (b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Synthesize one clip of a class texture, deterministically from the rng.
pub fn synth_clip(class: usize, rng: &mut ChaCha20Rng, sample_rate: u32) -> AudioClip {
    let tex = class_texture(class);
    let n = sample_rate as usize;
    let sr = sample_rate as f64;
    // small per-clip jitter keeps clips distinct without moving the bands
    let tone_hz = tex.tone_hz * (1.0 + 0.02 * (rng.random::<f64>() - 0.5));
    let am_hz = tex.am_hz * (1.0 + 0.05 * (rng.random::<f64>() - 0.5));
    let phase: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let am_phase: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let noise: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let shaped = bandpass(&noise, tex.noise_center_hz, 2.0, sr);
    let peak = shaped.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let am = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * am_hz * t + am_phase).sin();
            let tone = (2.0 * std::f64::consts::PI * tone_hz * t + phase).sin();
            0.4 * am * tone + 0.35 * shaped[i] / peak
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
    if peak > 0.95 {
        let g = 0.95 / peak;
        for s in &mut samples {
            *s *= g;
        }
    }
    AudioClip::new(samples, sample_rate)
}

/// Generate `per_class` 1-second clips for each of the 10 classes under
/// `out_dir/audio/`, with a deterministic 80/20 TRAIN/EVAL split stratified
/// by class. Equal seeds produce byte-identical files.
pub fn generate_synthetic_dataset(
    seed: u64,
    per_class: usize,
    sample_rate: u32,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if per_class < 2 {
        return Err(Error::Validation("per_class must be at least 2".into()));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let n_eval = (0.2 * per_class as f64).round() as usize;
    let mut entries = Vec::with_capacity(per_class * NUM_CLASSES);
    for (class, name) in SCENE_CLASSES.iter().enumerate() {
        for idx in 0..per_class {
            let clip_seed = seed
                .wrapping_mul(1_000_003)
                .wrapping_add((class * 100_000 + idx) as u64);
            let mut rng = ChaCha20Rng::seed_from_u64(clip_seed);
            let clip = synth_clip(class, &mut rng, sample_rate);
            let rel = format!("audio/{name}_{idx:04}.wav");
            save_wav(&out_dir.join(&rel), &clip)?;
            let split = if idx >= per_class - n_eval { Split::Eval } else { Split::Train };
            entries.push(ManifestEntry {
                clip_path: rel,
                scene_label: name.to_string(),
                device_id: DeviceId::Synth,
                city: "synthville".to_string(),
                split,
            });
        }
    }
    Ok(DatasetManifest::new(entries))
}

/// Resolve a manifest-relative clip path against the manifest's directory.
pub fn resolve_clip_path(manifest_path: &Path, clip_path: &str) -> PathBuf {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    base.join(clip_path)
}
