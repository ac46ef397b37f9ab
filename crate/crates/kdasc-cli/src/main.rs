//! Command-line front end for the scene-classification toolkit: dataset
//! synthesis, featurization, the two training phases, fusion evaluation,
//! and the complexity audit.
//!
//! Progress goes to stderr; results go to stdout or files. Exit codes:
//! 0 success, 1 runtime failure, 2 missing prerequisite, 3 config conflict.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kdasc::audit::{audit_model, check_budgets, MacConvention};
use kdasc::dataset::{generate_synthetic_dataset, load_manifest, save_manifest, Split};
use kdasc::dsp::SpecKind;
use kdasc::error::Error;
use kdasc::fusion::{compare_systems, evaluate, prod_fuse, reference_system, ClassPosterior,
    SystemMetrics};
use kdasc::model::{build_student, build_teacher, load_checkpoint, save_checkpoint, Checkpoint,
    ModelSpec, TeacherConfig};
use kdasc::train::{extract_all_embeddings, predict_posteriors, prepare_kind_data, prepare_split,
    train_student, train_teacher, EmbeddingStore, TrainReport};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "kdasc", version, about = "Teacher-student acoustic scene classification")]
struct Cli {
    /// Flat key = value config file; flags override its values
    /// (implementation choice)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Mel,
    Gam,
    Cqt,
    All,
}

impl KindArg {
    fn kinds(self) -> Vec<SpecKind> {
        match self {
            KindArg::Mel => vec![SpecKind::Mel],
            KindArg::Gam => vec![SpecKind::Gam],
            KindArg::Cqt => vec![SpecKind::Cqt],
            KindArg::All => vec![SpecKind::Mel, SpecKind::Gam, SpecKind::Cqt],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Student,
    Teacher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ConventionArg {
    ConvFc,
    Extended,
}

impl From<ConventionArg> for MacConvention {
    fn from(c: ConventionArg) -> MacConvention {
        match c {
            ConventionArg::ConvFc => MacConvention::ConvFc,
            ConventionArg::Extended => MacConvention::Extended,
        }
    }
}

#[derive(Parser, Debug)]
struct TrainFlags {
    /// Random seed (implementation choice; fixes initialization, shuffling,
    /// dropout, and mixup draws)
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs (implementation choice; source material is silent)
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size (implementation choice)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate (implementation choice)
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic 10-class dataset and its manifest
    Synth {
        /// Output directory for audio/ and manifest.tsv
        #[arg(long)]
        out: PathBuf,
        /// Clips per class, 80/20 train/eval split (implementation choice)
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample rate in Hz (44100 matches the front-end design)
        #[arg(long, default_value_t = 44100)]
        sample_rate: u32,
    },
    /// Compute and cache feature tensors for one or all spectrogram kinds
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        /// mel, gam, cqt (the three front ends), or all
        #[arg(long, value_enum, default_value_t = KindArg::All)]
        kind: KindArg,
        /// Feature cache directory; KDASC_CACHE overrides the default
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Phase I: train one teacher with mixup and cross entropy
    TrainTeacher {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Output directory for the checkpoint and report
        #[arg(long)]
        out: PathBuf,
        /// Residual block channels, comma-separated (implementation choice;
        /// the published teacher backbone is unavailable)
        #[arg(long, default_value = "32,64,128,256")]
        teacher_channels: String,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Extract frozen teacher embeddings for every train-split sample
    Embed {
        /// Teacher checkpoint from train-teacher
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output embedding store; defaults beside the checkpoint
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Phase II: train one student against stored teacher embeddings
    TrainStudent {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Embedding store from embed
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Evaluate one checkpoint on the eval split
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Also write metrics JSON here for later `report` merging
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Evaluate three students and their product-fused ensemble
    FuseEval {
        #[arg(long)]
        manifest: PathBuf,
        /// Student checkpoints to fuse
        #[arg(long, num_args = 1.., required = true)]
        students: Vec<PathBuf>,
        /// Directory for the comparison table and per-system metrics JSON
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Print per-layer complexity and the 128 KB / 30 M budget verdicts
    Audit {
        #[arg(long, value_enum, default_value_t = ModelArg::Student)]
        model: ModelArg,
        /// MAC counting convention (two shipped because the reference
        /// figures fit neither exactly)
        #[arg(long, value_enum, default_value_t = ConventionArg::ConvFc)]
        convention: ConventionArg,
        /// Number of copies in the ensemble budget check
        #[arg(long, default_value_t = 3)]
        ensemble: usize,
        #[arg(long, default_value = "32,64,128,256")]
        teacher_channels: String,
    },
    /// Merge saved metrics JSON files into one comparison table
    Report {
        /// Metrics JSON files from evaluate / fuse-eval
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        /// Externally supplied baseline column as "name,accuracy%,logloss"
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run_config = match RunConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    match dispatch(cli.command, &run_config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::MissingPrerequisite { .. } => 2,
                Error::Config(_) => 3,
                _ => 1,
            })
        }
    }
}

fn parse_channels(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("bad channel list: {s}")))
}

fn cache_dir(flag: Option<&Path>, cfg: &RunConfig, manifest: &Path) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("KDASC_CACHE").map(PathBuf::from))
        .or_else(|| cfg.cache_dir.clone())
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("cache"))
}

fn require(path: &Path, what: &str, fix: &str) -> Result<(), Error> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingPrerequisite {
            what: format!("{what} ({})", path.display()),
            fix: fix.to_string(),
        })
    }
}

fn teacher_spec(channels: &str) -> Result<ModelSpec, Error> {
    build_teacher(&TeacherConfig { block_channels: parse_channels(channels)?, kernel: [3, 3] })
}

fn finish_training(
    out: &Path,
    name: &str,
    checkpoint: &Checkpoint,
    report: &TrainReport,
) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    let ckpt_path = out.join(format!("{name}.ckpt"));
    save_checkpoint(checkpoint, &ckpt_path)?;
    report.save(&out.join(format!("{name}_report.tsv")))?;
    if let Some(msg) = &report.aborted {
        eprintln!("training aborted early: {msg}; kept last good checkpoint");
    }
    eprintln!(
        "best epoch {}: eval accuracy {:.4}, log loss {:.4}",
        report.best_epoch, report.best_eval_accuracy, report.best_eval_logloss
    );
    println!("{}", ckpt_path.display());
    Ok(())
}

fn eval_against_checkpoint(
    checkpoint: &Checkpoint,
    manifest_path: &Path,
    cache: &Path,
    name: &str,
) -> Result<(SystemMetrics, Vec<Vec<f64>>, Vec<usize>), Error> {
    let kind = checkpoint
        .kind
        .ok_or_else(|| Error::Config("checkpoint does not record a spectrogram kind".into()))?;
    let manifest = load_manifest(manifest_path)?;
    let samples = prepare_split(
        &manifest,
        manifest_path,
        kind,
        Split::Eval,
        &checkpoint.stats,
        Some(cache),
    )?;
    let mut net = checkpoint.restore()?;
    let posteriors = predict_posteriors(&mut net, &samples, 32)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let metrics = evaluate(name, &posteriors, &labels)?;
    Ok((metrics, posteriors, labels))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<(), Error> {
    match command {
        Command::Synth { out, per_class, seed, sample_rate } => {
            let seed = seed.unwrap_or(cfg.train.seed);
            let manifest = generate_synthetic_dataset(seed, per_class, sample_rate, &out)?;
            let manifest_path = out.join("manifest.tsv");
            save_manifest(&manifest, &manifest_path)?;
            eprintln!("generated {per_class} clips per class under {}", out.display());
            println!("{}", manifest_path.display());
            Ok(())
        }
        Command::Featurize { manifest, kind, cache } => {
            require(&manifest, "dataset manifest", "run `kdasc synth` first")?;
            let cache = cache_dir(cache.as_deref(), cfg, &manifest);
            let parsed = load_manifest(&manifest)?;
            for k in kind.kinds() {
                let kind_dir = cache.join(k.as_str());
                let before = count_files(&kind_dir);
                let data = prepare_kind_data(&parsed, &manifest, k, Some(&cache))?;
                let after = count_files(&kind_dir);
                if after == before && before > 0 {
                    eprintln!("{}: cache hit, nothing to do", k.as_str());
                } else {
                    eprintln!(
                        "{}: featurized {} clips ({} new)",
                        k.as_str(),
                        data.train.len() + data.eval.len(),
                        after - before
                    );
                }
                println!("{}", kind_dir.display());
            }
            Ok(())
        }
        Command::TrainTeacher { manifest, kind, out, teacher_channels, cache, train } => {
            require(&manifest, "dataset manifest", "run `kdasc synth` first")?;
            let cache = cache_dir(cache.as_deref(), cfg, &manifest);
            let tc = cfg.teacher_config(&train)?;
            let spec = teacher_spec(&teacher_channels)?;
            let parsed = load_manifest(&manifest)?;
            for k in kind.kinds() {
                eprintln!("training teacher ({})", k.as_str());
                let data = prepare_kind_data(&parsed, &manifest, k, Some(&cache))?;
                let (ckpt, report) =
                    train_teacher(&spec, k, &data.train, &data.eval, &tc, data.stats)?;
                finish_training(&out, &format!("teacher_{}", k.as_str()), &ckpt, &report)?;
            }
            Ok(())
        }
        Command::Embed { teacher, manifest, out, cache } => {
            require(&teacher, "teacher checkpoint", "run `kdasc train-teacher` first")?;
            require(&manifest, "dataset manifest", "run `kdasc synth` first")?;
            let cache = cache_dir(cache.as_deref(), cfg, &manifest);
            let ckpt = load_checkpoint(&teacher)?;
            let kind = ckpt.kind.ok_or_else(|| {
                Error::Config("teacher checkpoint does not record a spectrogram kind".into())
            })?;
            let parsed = load_manifest(&manifest)?;
            let samples = prepare_split(
                &parsed,
                &manifest,
                kind,
                Split::Train,
                &ckpt.stats,
                Some(&cache),
            )?;
            let store = extract_all_embeddings(&ckpt, kind, &samples)?;
            let out = out.unwrap_or_else(|| {
                teacher
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(format!("embeddings_{}.emb", kind.as_str()))
            });
            store.save(&out)?;
            eprintln!("extracted {} embeddings", store.len());
            println!("{}", out.display());
            Ok(())
        }
        Command::TrainStudent { manifest, kind, embeddings, out, cache, train } => {
            require(&manifest, "dataset manifest", "run `kdasc synth` first")?;
            require(&embeddings, "embedding store", "run `kdasc embed` first")?;
            let cache = cache_dir(cache.as_deref(), cfg, &manifest);
            let sc = cfg.student_config(&train)?;
            let spec = build_student();
            let store = EmbeddingStore::load(&embeddings)?;
            let parsed = load_manifest(&manifest)?;
            for k in kind.kinds() {
                if store.kind != k {
                    return Err(Error::Config(format!(
                        "embedding store holds {} embeddings but --kind is {}",
                        store.kind.as_str(),
                        k.as_str()
                    )));
                }
                eprintln!("training student ({})", k.as_str());
                let data = prepare_kind_data(&parsed, &manifest, k, Some(&cache))?;
                let (ckpt, report) =
                    train_student(&spec, k, &data.train, &data.eval, &sc, data.stats, &store)?;
                finish_training(&out, &format!("student_{}", k.as_str()), &ckpt, &report)?;
            }
            Ok(())
        }
        Command::Evaluate { checkpoint, manifest, out, cache } => {
            require(&checkpoint, "model checkpoint", "run `kdasc train-teacher` or `kdasc train-student` first")?;
            require(&manifest, "dataset manifest", "run `kdasc synth` first")?;
            let cache = cache_dir(cache.as_deref(), cfg, &manifest);
            let ckpt = load_checkpoint(&checkpoint)?;
            let name = checkpoint
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            let (metrics, _, _) = eval_against_checkpoint(&ckpt, &manifest, &cache, &name)?;
            print!("{}", compare_systems(vec![metrics.clone()])?.to_tsv());
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_vec_pretty(&metrics)?)?;
                eprintln!("metrics written to {}", out.display());
            }
            Ok(())
        }
        Command::FuseEval { manifest, students, out, cache } => {
            require(&manifest, "dataset manifest", "run `kdasc synth` first")?;
            let cache = cache_dir(cache.as_deref(), cfg, &manifest);
            let mut systems = Vec::new();
            let mut all_posteriors: Vec<Vec<Vec<f64>>> = Vec::new();
            let mut labels: Option<Vec<usize>> = None;
            let mut fused_bytes = 0usize;
            let mut fused_macs = 0u64;
            for path in &students {
                require(path, "student checkpoint", "run `kdasc train-student` first")?;
                let ckpt = load_checkpoint(path)?;
                let kind = ckpt.kind.map(|k| k.as_str()).unwrap_or("?");
                let report = audit_model(&ckpt.spec, MacConvention::ConvFc)?;
                fused_bytes += report.total_bytes;
                fused_macs += report.total_macs;
                let (mut metrics, posteriors, these_labels) = eval_against_checkpoint(
                    &ckpt,
                    &manifest,
                    &cache,
                    &format!("student_{kind}"),
                )?;
                metrics.memory_kb = Some(report.total_bytes as f64 / 1024.0);
                metrics.macs_m = Some(report.total_macs as f64 / 1e6);
                match &labels {
                    None => labels = Some(these_labels),
                    Some(l) if *l != these_labels => {
                        return Err(Error::Validation(
                            "students disagree on the evaluation sample order".into(),
                        ))
                    }
                    _ => {}
                }
                systems.push(metrics);
                all_posteriors.push(posteriors);
            }
            let labels = labels.ok_or_else(|| Error::EmptyInput("no students".into()))?;
            let n = labels.len();
            let mut fused_scores = Vec::with_capacity(n);
            for i in 0..n {
                let per_model: Vec<ClassPosterior> = all_posteriors
                    .iter()
                    .map(|p| ClassPosterior::new(p[i].clone()))
                    .collect::<Result<_, _>>()?;
                fused_scores.push(prod_fuse(&per_model)?.fused);
            }
            let mut fused = evaluate("fused", &fused_scores, &labels)?;
            fused.memory_kb = Some(fused_bytes as f64 / 1024.0);
            fused.macs_m = Some(fused_macs as f64 / 1e6);
            systems.push(fused);
            let table = compare_systems(systems)?;
            print!("{}", table.to_tsv());
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                table.save(&out.join("comparison.tsv"))?;
                for s in &table.systems {
                    std::fs::write(
                        out.join(format!("{}_metrics.json", s.name)),
                        serde_json::to_vec_pretty(s)?,
                    )?;
                }
                eprintln!("comparison written to {}", out.join("comparison.tsv").display());
            }
            Ok(())
        }
        Command::Audit { model, convention, ensemble, teacher_channels } => {
            let spec = match model {
                ModelArg::Student => build_student(),
                ModelArg::Teacher => teacher_spec(&teacher_channels)?,
            };
            let report = audit_model(&spec, convention.into())?;
            print!("{}", report.to_tsv());
            let single = check_budgets(std::slice::from_ref(&report))?;
            println!("single\t{}", single.verdict_line());
            if ensemble > 1 {
                let many = vec![report; ensemble];
                let verdict = check_budgets(&many)?;
                println!("ensemble_x{ensemble}\t{}", verdict.verdict_line());
            }
            Ok(())
        }
        Command::Report { metrics, baseline, out } => {
            let mut systems = Vec::new();
            for path in &metrics {
                require(path, "metrics JSON", "run `kdasc evaluate --out` or `kdasc fuse-eval --out` first")?;
                let sys: SystemMetrics = serde_json::from_slice(&std::fs::read(path)?)?;
                systems.push(sys);
            }
            if let Some(spec) = baseline {
                let parts: Vec<&str> = spec.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(
                        "baseline must be name,accuracy%,logloss".into(),
                    ));
                }
                let acc: f64 = parts[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config("bad baseline accuracy".into()))?;
                let ll: f64 = parts[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config("bad baseline logloss".into()))?;
                systems.push(reference_system(parts[0].trim(), acc / 100.0, ll));
            }
            let table = compare_systems(systems)?;
            print!("{}", table.to_tsv());
            if let Some(out) = out {
                table.save(&out)?;
            }
            Ok(())
        }
    }
}

fn count_files(dir: &Path) -> usize {
    std::fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}
