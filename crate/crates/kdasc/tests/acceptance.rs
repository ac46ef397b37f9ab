//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines on success.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use kdasc::audio::AudioClip;
use kdasc::audit::{audit_model, check_budgets, MacConvention};
use kdasc::dataset::{generate_synthetic_dataset, save_manifest, DatasetManifest};
use kdasc::dsp::{
    add_deltas, apply_filterbank, build_filterbank, featurize_raw, stft_power, Frontend, Mat,
    SpecKind, SpectrogramConfig, FEAT_CHANNELS, FEAT_FRAMES, FEAT_FREQS, FEAT_LEN, SAMPLE_RATE,
};
use kdasc::fusion::{decide_label, prod_fuse, ClassPosterior};
use kdasc::model::{build_student, build_teacher, Checkpoint, TeacherConfig};
use kdasc::nn::{cross_entropy, mse, LayerSpec, Mode, Network, Tensor, TrainConfig};
use kdasc::train::{
    accuracy, extract_all_embeddings, predict_posteriors, prepare_kind_data, train_student,
    train_teacher, KindData,
};

fn criterion<F: FnOnce() + std::panic::UnwindSafe>(name: &str, f: F) {
    match std::panic::catch_unwind(f) {
        Ok(()) => println!("ACCEPTANCE {name}: PASS"),
        Err(e) => {
            println!("ACCEPTANCE {name}: FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient suite: central-difference oracle, step 1e-3, rel < 1e-4,
//    at least 3 random shapes per layer and loss, under 2 minutes.

const FD_STEP: f64 = 1e-3;
const FD_TOL: f64 = 1e-4;
const FD_COORDS: usize = 100;

fn rel_err(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m < 1e-8 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

fn dot(t: &Tensor, v: &[f64]) -> f64 {
    t.data.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn forward_loss(net: &mut Network, input: &Tensor, v: &[f64]) -> f64 {
    // fixed reseed keeps dropout masks identical across the finite
    // difference evaluations
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let out = net.forward(input, Mode::Train, &mut rng).unwrap();
    dot(&out, v)
}

fn nudge_param(net: &mut Network, tensor_idx: usize, coord: usize, delta: f64) {
    let mut i = 0;
    net.visit_params(&mut |_, p, _| {
        if i == tensor_idx {
            p.data[coord] += delta;
        }
        i += 1;
    });
}

/// Checks input and parameter gradients of a single-layer network against
/// central differences on sampled coordinates.
fn grad_check_layer(spec: LayerSpec, in_shape: &[usize], batch: usize, seed: u64) {
    let mut net = Network::build(&[spec.clone()], in_shape, seed).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(1000));
    let in_len: usize = in_shape.iter().product::<usize>() * batch;
    let mut full_shape = vec![batch];
    full_shape.extend_from_slice(in_shape);
    // keep activations away from the ReLU kink so the difference quotient
    // stays two-sided
    let data: Vec<f64> = (0..in_len)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
            u + 0.15 * u.signum()
        })
        .collect();
    let input = Tensor::from_vec(&full_shape, data);
    let out_shape_per = spec.output_shape(in_shape).unwrap();
    let out_len: usize = out_shape_per.iter().product::<usize>() * batch;
    let v: Vec<f64> = (0..out_len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

    // analytic pass
    let mut rng_fwd = ChaCha20Rng::seed_from_u64(7);
    let out = net.forward(&input, Mode::Train, &mut rng_fwd).unwrap();
    let mut grad_out = Tensor::zeros(&out.shape);
    grad_out.data.copy_from_slice(&v);
    let grad_in = net.backward(&grad_out, None).unwrap();
    let mut param_grads: Vec<Vec<f64>> = Vec::new();
    net.visit_params(&mut |_, _, g| param_grads.push(g.data.clone()));

    let tag = spec.tag();
    let base = forward_loss(&mut net, &input, &v);
    // ReLU-bearing layers are piecewise linear, so their second difference
    // is zero away from kinks; a perturbation straddling a kink shows up as
    // a nonzero second difference and that coordinate is skipped (capped
    // below). Smooth layers keep genuine curvature, so no guard there.
    let piecewise_linear = matches!(spec, LayerSpec::Relu | LayerSpec::Residual { .. });
    let kink = |up: f64, down: f64| {
        piecewise_linear && (up + down - 2.0 * base).abs() > 1e-9 * base.abs().max(1.0)
    };
    let mut checked = 0usize;
    let mut skipped = 0usize;
    // input coordinates
    for k in 0..FD_COORDS.min(in_len) {
        let c = (k * 7919) % in_len;
        let mut x = input.clone();
        x.data[c] += FD_STEP;
        let up = forward_loss(&mut net, &x, &v);
        x.data[c] -= 2.0 * FD_STEP;
        let down = forward_loss(&mut net, &x, &v);
        if kink(up, down) {
            skipped += 1;
            continue;
        }
        checked += 1;
        let fd = (up - down) / (2.0 * FD_STEP);
        let err = rel_err(grad_in.data[c], fd);
        assert!(
            err < FD_TOL,
            "{tag} input coord {c}: analytic {} vs fd {fd}, rel {err}",
            grad_in.data[c]
        );
    }
    // parameter coordinates
    for (t_idx, grads) in param_grads.iter().enumerate() {
        let n = grads.len();
        for k in 0..FD_COORDS.min(n) {
            let c = (k * 7919) % n;
            nudge_param(&mut net, t_idx, c, FD_STEP);
            let up = forward_loss(&mut net, &input, &v);
            nudge_param(&mut net, t_idx, c, -2.0 * FD_STEP);
            let down = forward_loss(&mut net, &input, &v);
            nudge_param(&mut net, t_idx, c, FD_STEP);
            if kink(up, down) {
                skipped += 1;
                continue;
            }
            checked += 1;
            let fd = (up - down) / (2.0 * FD_STEP);
            let err = rel_err(grads[c], fd);
            assert!(
                err < FD_TOL,
                "{tag} param tensor {t_idx} coord {c}: analytic {} vs fd {fd}, rel {err}",
                grads[c]
            );
        }
    }
    assert!(
        skipped * 10 <= checked + skipped,
        "{tag}: {skipped} kink skips out of {} coordinates",
        checked + skipped
    );
}

fn grad_check_losses(seed: u64, n: usize, c: usize) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // predictions strictly inside the simplex so the step stays in-domain
    let mut pred = Tensor::zeros(&[n, c]);
    for s in 0..n {
        let logits: Vec<f64> = (0..c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        // keep entries >= 0.07 so the O(h^2 / p^2) truncation error of the
        // central difference on ln(p) stays under the tolerance
        for j in 0..c {
            pred.data[s * c + j] = 0.3 * exps[j] / sum + 0.7 / c as f64;
        }
    }
    let mut target = Tensor::zeros(&[n, c]);
    for s in 0..n {
        target.data[s * c + rng.random_range(0..c)] = 1.0;
    }
    let (_, grad) = cross_entropy(&pred, &target).unwrap();
    for coord in 0..n * c {
        let mut p = pred.clone();
        p.data[coord] += FD_STEP;
        let (up, _) = cross_entropy(&p, &target).unwrap();
        p.data[coord] -= 2.0 * FD_STEP;
        let (down, _) = cross_entropy(&p, &target).unwrap();
        let fd = (up - down) / (2.0 * FD_STEP);
        let err = rel_err(grad.data[coord], fd);
        assert!(err < FD_TOL, "cross_entropy coord {coord}: rel {err}");
    }

    let a = Tensor::from_vec(
        &[n, c],
        (0..n * c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    );
    let b = Tensor::from_vec(
        &[n, c],
        (0..n * c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    );
    let (_, grad) = mse(&a, &b).unwrap();
    for coord in 0..n * c {
        let mut p = a.clone();
        p.data[coord] += FD_STEP;
        let (up, _) = mse(&p, &b).unwrap();
        p.data[coord] -= 2.0 * FD_STEP;
        let (down, _) = mse(&p, &b).unwrap();
        let fd = (up - down) / (2.0 * FD_STEP);
        let err = rel_err(grad.data[coord], fd);
        assert!(err < FD_TOL, "mse coord {coord}: rel {err}");
    }
}

#[test]
fn a1_gradient_suite() {
    criterion("gradient suite", || {
        let t0 = Instant::now();
        let conv_shapes: [(LayerSpec, Vec<usize>, usize); 3] = [
            (LayerSpec::Conv2d { kernel: [2, 2], out_channels: 4 }, vec![5, 6, 3], 2),
            (LayerSpec::Conv2d { kernel: [3, 3], out_channels: 3 }, vec![4, 4, 2], 1),
            (LayerSpec::Conv2d { kernel: [1, 1], out_channels: 2 }, vec![3, 3, 4], 3),
        ];
        for (i, (spec, shape, batch)) in conv_shapes.into_iter().enumerate() {
            grad_check_layer(spec, &shape, batch, 10 + i as u64);
        }
        let residual_shapes: [(LayerSpec, Vec<usize>, usize); 3] = [
            (LayerSpec::Residual { kernel: [2, 2], out_channels: 4 }, vec![4, 4, 3], 2),
            (LayerSpec::Residual { kernel: [3, 3], out_channels: 4 }, vec![4, 4, 4], 1),
            (LayerSpec::Residual { kernel: [2, 2], out_channels: 5 }, vec![6, 6, 2], 2),
        ];
        for (i, (spec, shape, batch)) in residual_shapes.into_iter().enumerate() {
            grad_check_layer(spec, &shape, batch, 20 + i as u64);
        }
        for (i, (shape, batch)) in
            [(vec![3, 3, 2], 4), (vec![5, 5, 3], 2), (vec![2, 2, 4], 3)].into_iter().enumerate()
        {
            grad_check_layer(LayerSpec::BatchNorm, &shape, batch, 30 + i as u64);
        }
        for (i, (shape, batch)) in
            [(vec![4, 4, 2], 2), (vec![7, 3, 1], 3), (vec![2, 8, 5], 1)].into_iter().enumerate()
        {
            grad_check_layer(LayerSpec::Relu, &shape, batch, 40 + i as u64);
        }
        let pool_shapes: [(LayerSpec, Vec<usize>, usize); 3] = [
            (LayerSpec::AvgPool { pool: [2, 2] }, vec![4, 6, 3], 2),
            (LayerSpec::AvgPool { pool: [2, 3] }, vec![4, 6, 2], 1),
            (LayerSpec::AvgPool { pool: [3, 1] }, vec![6, 4, 4], 2),
        ];
        for (i, (spec, shape, batch)) in pool_shapes.into_iter().enumerate() {
            grad_check_layer(spec, &shape, batch, 50 + i as u64);
        }
        for (i, (shape, batch)) in
            [(vec![4, 4, 3], 2), (vec![2, 6, 2], 3), (vec![5, 5, 1], 1)].into_iter().enumerate()
        {
            grad_check_layer(LayerSpec::GlobalAvgPool, &shape, batch, 60 + i as u64);
        }
        let drop_shapes: [(LayerSpec, Vec<usize>, usize); 3] = [
            (LayerSpec::Dropout { rate: 0.25 }, vec![4, 4, 2], 2),
            (LayerSpec::Dropout { rate: 0.10 }, vec![12], 3),
            (LayerSpec::Dropout { rate: 0.50 }, vec![3, 3, 3], 2),
        ];
        for (i, (spec, shape, batch)) in drop_shapes.into_iter().enumerate() {
            grad_check_layer(spec, &shape, batch, 70 + i as u64);
        }
        let dense_shapes: [(LayerSpec, Vec<usize>, usize); 3] = [
            (LayerSpec::Dense { out_features: 5 }, vec![7], 2),
            (LayerSpec::Dense { out_features: 10 }, vec![16], 3),
            (LayerSpec::Dense { out_features: 3 }, vec![4], 1),
        ];
        for (i, (spec, shape, batch)) in dense_shapes.into_iter().enumerate() {
            grad_check_layer(spec, &shape, batch, 80 + i as u64);
        }
        for (i, (shape, batch)) in
            [(vec![4], 2), (vec![10], 3), (vec![7], 1)].into_iter().enumerate()
        {
            grad_check_layer(LayerSpec::Softmax, &shape, batch, 90 + i as u64);
        }
        grad_check_losses(100, 2, 4);
        grad_check_losses(101, 3, 10);
        grad_check_losses(102, 5, 7);
        let elapsed = t0.elapsed();
        assert!(elapsed.as_secs() < 120, "gradient suite took {elapsed:?}");
    });
}

// ---------------------------------------------------------------------------
// 2. Architecture audit

#[test]
fn a2_architecture_audit() {
    criterion("architecture audit", || {
        let student = build_student();
        let conv_fc = audit_model(&student, MacConvention::ConvFc).unwrap();
        let extended = audit_model(&student, MacConvention::Extended).unwrap();
        for layer in &conv_fc.layers {
            assert_eq!(layer.bytes, 4 * layer.params);
        }
        assert_eq!(conv_fc.total_bytes, 4 * conv_fc.total_params);
        let three_bytes = 3 * conv_fc.total_bytes;
        assert!(three_bytes <= 131_072);
        let rel = (three_bytes as f64 - 88_704.0).abs() / 88_704.0;
        assert!(rel <= 0.15, "ensemble bytes {three_bytes} vs reference 88704, rel {rel}");
        assert!(3 * conv_fc.total_macs <= 30_000_000);
        for report in [&conv_fc, &extended] {
            assert!(
                (8_300_000..=11_200_000).contains(&report.total_macs),
                "{} MACs {} outside the reference bracket",
                report.convention.as_str(),
                report.total_macs
            );
        }
        let verdict = check_budgets(&[conv_fc.clone(), conv_fc.clone(), conv_fc.clone()])
            .unwrap();
        assert!(verdict.fits());
        println!(
            "  (report only: derived {} params per student vs published 22962/3; \
             sum over 3 students = {} vs 22962)",
            conv_fc.total_params,
            3 * conv_fc.total_params
        );
    });
}

// ---------------------------------------------------------------------------
// 3. Fusion oracle

#[test]
fn a3_fusion_oracle() {
    criterion("fusion oracle", || {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let s = rng.random_range(1..=5usize);
            let posteriors: Vec<ClassPosterior> = (0..s)
                .map(|_| {
                    let raw: Vec<f64> =
                        (0..10).map(|_| rng.random::<f64>() + 1e-9).collect();
                    let sum: f64 = raw.iter().sum();
                    ClassPosterior::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
                })
                .collect();
            let result = prod_fuse(&posteriors).unwrap();
            // brute-force direct product
            let brute: Vec<f64> = (0..10)
                .map(|i| posteriors.iter().map(|p| p.probs[i]).product::<f64>() / s as f64)
                .collect();
            for (a, b) in result.fused.iter().zip(&brute) {
                assert!(rel_err(*a, *b) < 1e-9, "{a} vs {b}");
            }
            let raw_product: Vec<f64> = brute.iter().map(|v| v * s as f64).collect();
            assert_eq!(result.predicted_label, decide_label(&raw_product).unwrap());
        }
    });
}

// ---------------------------------------------------------------------------
// 4. DSP suite

fn tone(freq: f64) -> AudioClip {
    let samples: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin() * 0.5)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE)
}

#[test]
fn a4_dsp_suite() {
    criterion("dsp suite", || {
        for kind in [SpecKind::Mel, SpecKind::Gam, SpecKind::Cqt] {
            let config = SpectrogramConfig::for_kind(kind);
            let bank = build_filterbank(&config).unwrap();
            let freq = 1000.0;
            let spec = stft_power(&tone(freq), &config).unwrap();
            let filtered = apply_filterbank(&spec, &bank).unwrap();
            let mid = filtered.cols / 2;
            let peak = (0..filtered.rows)
                .max_by(|&a, &b| filtered.at(a, mid).total_cmp(&filtered.at(b, mid)))
                .unwrap();
            let center = bank.center_frequencies[peak];
            assert!(
                (center - freq).abs() / freq < 0.1,
                "{}: peak filter center {center} for a {freq} Hz tone",
                kind.as_str()
            );
        }

        // delta closed forms on interior frames
        let slope = 0.41;
        let mut ramp = Mat::zeros(FEAT_FREQS, 132);
        let mut flat = Mat::zeros(FEAT_FREQS, 132);
        for r in 0..FEAT_FREQS {
            for c in 0..132 {
                ramp.set(r, c, slope * c as f64);
                flat.set(r, c, 3.5);
            }
        }
        let ramp_t = add_deltas(&ramp, SpecKind::Mel).unwrap();
        let flat_t = add_deltas(&flat, SpecKind::Mel).unwrap();
        for f in 0..FEAT_FREQS {
            for t in 2..FEAT_FRAMES - 2 {
                assert!((ramp_t.at(f, t, 1) - slope).abs() < 1e-12);
            }
            for t in 0..FEAT_FRAMES {
                assert_eq!(flat_t.at(f, t, 1), 0.0);
                assert_eq!(flat_t.at(f, t, 2), 0.0);
            }
        }

        // featurize output shape is always 128 x 128 x 3
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let noise = AudioClip::new(
            (0..SAMPLE_RATE as usize).map(|_| rng.random::<f64>() - 0.5).collect(),
            SAMPLE_RATE,
        );
        for kind in [SpecKind::Mel, SpecKind::Gam, SpecKind::Cqt] {
            let frontend = Frontend::new(kind).unwrap();
            let feat = featurize_raw(&noise, kind, &frontend.bank).unwrap();
            assert_eq!(feat.values.len(), FEAT_LEN);
            assert_eq!(FEAT_LEN, FEAT_FREQS * FEAT_FRAMES * FEAT_CHANNELS);
        }
    });
}

// ---------------------------------------------------------------------------
// Shared synthetic dataset for the training criteria

const DATASET_SEED: u64 = 42;
const CLIPS_PER_CLASS: usize = 100;

struct Shared {
    _dir: tempfile::TempDir,
    manifest: DatasetManifest,
    manifest_path: PathBuf,
    cache: PathBuf,
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            generate_synthetic_dataset(DATASET_SEED, CLIPS_PER_CLASS, 44100, dir.path()).unwrap();
        let manifest_path = dir.path().join("manifest.tsv");
        save_manifest(&manifest, &manifest_path).unwrap();
        let cache = dir.path().join("cache");
        Shared { manifest, manifest_path, cache, _dir: dir }
    })
}

fn kind_data(kind: SpecKind) -> KindData {
    let s = shared();
    prepare_kind_data(&s.manifest, &s.manifest_path, kind, Some(&s.cache)).unwrap()
}

fn e2e_teacher_spec() -> kdasc::model::ModelSpec {
    // reduced stand-in teacher sized for a single-core desk run
    build_teacher(&TeacherConfig { block_channels: vec![8, 16, 32, 64], kernel: [2, 2] })
        .unwrap()
}

// ---------------------------------------------------------------------------
// 5. Overfit sanity

#[test]
fn a5_overfit_sanity() {
    criterion("overfit sanity", || {
        let data = kind_data(SpecKind::Mel);
        // stratified 32-sample subset: first 3-4 train clips of each class
        let mut subset = Vec::new();
        for class in 0..10 {
            let mut picked = 0;
            for s in data.train.iter().filter(|s| s.label == class) {
                subset.push(s.clone());
                picked += 1;
                if picked == if class < 2 { 4 } else { 3 } {
                    break;
                }
            }
        }
        assert_eq!(subset.len(), 32);

        // overfit the teacher on the subset first, so its embeddings are
        // separable and both student loss terms can reach their floor
        let teacher = e2e_teacher_spec();
        let tc = TrainConfig { epochs: 40, batch_size: 8, seed: 5, ..TrainConfig::default() };
        let (teacher_ckpt, _) =
            train_teacher(&teacher, SpecKind::Mel, &subset, &subset, &tc, data.stats).unwrap();
        let store = extract_all_embeddings(&teacher_ckpt, SpecKind::Mel, &subset).unwrap();

        let sc = TrainConfig {
            epochs: 500,
            batch_size: 8,
            seed: 6,
            mixup_alpha: None,
            ..TrainConfig::default()
        };
        let student_spec = build_student();

        // initial distillation error: same weight init as the training run,
        // one train-mode pass only to populate batchnorm running stats, then
        // eval-mode embeddings (dropout off, so the number is not inflated
        // by sampling noise)
        let eval_embed_mse = |net: &mut kdasc::nn::Network| -> f64 {
            let mut total = 0.0;
            let mut n = 0usize;
            for s in &subset {
                let emb = kdasc::model::extract_embedding(net, &student_spec, &s.feature).unwrap();
                let target = store.get(&s.id).unwrap();
                for (a, &b) in emb.iter().zip(target) {
                    total += (a - b as f64).powi(2);
                    n += 1;
                }
            }
            total / n as f64
        };
        let mut init_net = student_spec.build_network(sc.seed).unwrap();
        let feats: Vec<&kdasc::dsp::FeatureTensor> = subset.iter().map(|s| &s.feature).collect();
        let warm = kdasc::model::features_to_batch(&feats);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        init_net.forward(&warm, Mode::Train, &mut rng).unwrap();
        let initial_mse = eval_embed_mse(&mut init_net);

        let (ckpt, report) = train_student(
            &student_spec,
            SpecKind::Mel,
            &subset,
            &subset,
            &sc,
            data.stats,
            &store,
        )
        .unwrap();
        let hit = report.rows.iter().find(|r| r.train_accuracy == 1.0);
        assert!(hit.is_some(), "train accuracy never reached 1.0 in 500 epochs");
        let mut trained = ckpt.restore().unwrap();
        let final_mse = eval_embed_mse(&mut trained);
        for r in report.rows.iter().step_by(100) {
            println!("  epoch {}: train-mode mse {:.5}, acc {:.3}", r.epoch, r.mse, r.train_accuracy);
        }
        println!(
            "  (train accuracy 1.0 first reached at epoch {}; best epoch {}; distillation mse {:.5} -> {:.5})",
            hit.unwrap().epoch,
            report.best_epoch,
            initial_mse,
            final_mse
        );
        assert!(
            final_mse < 0.1 * initial_mse,
            "distillation mse {final_mse} did not fall below 10% of {initial_mse}"
        );
    });
}

// ---------------------------------------------------------------------------
// 6. End-to-end desk-scale run. Thresholds below were locked after the
//    first oracle run with DATASET_SEED = 42.

#[test]
fn a6_end_to_end() {
    criterion("end-to-end desk-scale run", || {
        let t0 = Instant::now();
        let teacher_spec = e2e_teacher_spec();
        let student_spec = build_student();
        let mut student_accs = Vec::new();
        let mut per_kind_posteriors = Vec::new();
        let mut eval_labels: Option<Vec<usize>> = None;
        for (i, kind) in [SpecKind::Mel, SpecKind::Gam, SpecKind::Cqt].into_iter().enumerate() {
            let data = kind_data(kind);
            let tc = TrainConfig {
                epochs: 4,
                batch_size: 32,
                seed: 100 + i as u64,
                ..TrainConfig::default()
            };
            let (teacher_ckpt, treport) =
                train_teacher(&teacher_spec, kind, &data.train, &data.eval, &tc, data.stats)
                    .unwrap();
            eprintln!(
                "  teacher {}: best eval acc {:.3}",
                kind.as_str(),
                treport.best_eval_accuracy
            );
            let store = extract_all_embeddings(&teacher_ckpt, kind, &data.train).unwrap();
            let sc = TrainConfig {
                epochs: 10,
                batch_size: 32,
                seed: 200 + i as u64,
                mixup_alpha: None,
                ..TrainConfig::default()
            };
            let (student_ckpt, sreport) = train_student(
                &student_spec,
                kind,
                &data.train,
                &data.eval,
                &sc,
                data.stats,
                &store,
            )
            .unwrap();
            eprintln!(
                "  student {}: best eval acc {:.3}",
                kind.as_str(),
                sreport.best_eval_accuracy
            );
            let mut net = student_ckpt.restore().unwrap();
            let posteriors = predict_posteriors(&mut net, &data.eval, 32).unwrap();
            let labels: Vec<usize> = data.eval.iter().map(|s| s.label).collect();
            let acc = accuracy(&posteriors, &labels).unwrap();
            assert!(
                acc > 0.5,
                "student {} eval accuracy {acc} at or below 0.5",
                kind.as_str()
            );
            student_accs.push(acc);
            per_kind_posteriors.push(posteriors);
            match &eval_labels {
                None => eval_labels = Some(labels),
                Some(l) => assert_eq!(*l, labels),
            }
        }
        let labels = eval_labels.unwrap();
        let mut fused_correct = 0usize;
        for i in 0..labels.len() {
            let ps: Vec<ClassPosterior> = per_kind_posteriors
                .iter()
                .map(|p| ClassPosterior::new(p[i].clone()).unwrap())
                .collect();
            if prod_fuse(&ps).unwrap().predicted_label == labels[i] {
                fused_correct += 1;
            }
        }
        let fused_acc = fused_correct as f64 / labels.len() as f64;
        let best = student_accs.iter().cloned().fold(0.0, f64::max);
        eprintln!("  fused acc {fused_acc:.3}, best single {best:.3}");
        assert!(
            fused_acc >= best - 0.02,
            "fused accuracy {fused_acc} more than 2pp below best student {best}"
        );
        let elapsed = t0.elapsed();
        assert!(elapsed.as_secs() < 3600, "end-to-end run took {elapsed:?}");
        println!(
            "  (students {:.3}/{:.3}/{:.3}, fused {fused_acc:.3}, wall {elapsed:?})",
            student_accs[0], student_accs[1], student_accs[2]
        );
    });
}

// ---------------------------------------------------------------------------
// 7. Reference-only figures

#[test]
fn a7_reference_figures_not_reproduced() {
    criterion("reference figures documented, not asserted", || {
        // The published 57.4 / 1.333 average and the per-class real-dataset
        // columns need the original corpus and teacher backbone, which are
        // unavailable here. They appear in the README as reference rows
        // only; classification quality is gated by the oracle suite above.
        let readme = std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md"),
        )
        .unwrap();
        assert!(readme.contains("57.4"), "README must document the reference average");
        assert!(readme.contains("1.333"), "README must document the reference log loss");
    });
}

// ---------------------------------------------------------------------------
// 8. Reproducibility: same seed, byte-identical artifacts. Run at reduced
//    scale (8 clips per class, short schedules) to keep the double run cheap;
//    the code path is the full pipeline.

fn run_pipeline(root: &Path) -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
    let manifest = generate_synthetic_dataset(7, 8, 44100, root).unwrap();
    let manifest_path = root.join("manifest.tsv");
    save_manifest(&manifest, &manifest_path).unwrap();
    let data = prepare_kind_data(&manifest, &manifest_path, SpecKind::Gam, None).unwrap();
    let teacher_spec =
        build_teacher(&TeacherConfig { block_channels: vec![4, 8], kernel: [2, 2] }).unwrap();
    let tc = TrainConfig { epochs: 2, batch_size: 8, seed: 11, ..TrainConfig::default() };
    let (teacher_ckpt, _) =
        train_teacher(&teacher_spec, SpecKind::Gam, &data.train, &data.eval, &tc, data.stats)
            .unwrap();
    let store = extract_all_embeddings(&teacher_ckpt, SpecKind::Gam, &data.train).unwrap();
    let sc = TrainConfig {
        epochs: 2,
        batch_size: 8,
        seed: 12,
        mixup_alpha: None,
        ..TrainConfig::default()
    };
    let (student_ckpt, _) = train_student(
        &build_student(),
        SpecKind::Gam,
        &data.train,
        &data.eval,
        &sc,
        data.stats,
        &store,
    )
    .unwrap();
    let teacher_path = root.join("teacher.ckpt");
    let student_path = root.join("student.ckpt");
    let store_path = root.join("embeddings.emb");
    kdasc::model::save_checkpoint(&teacher_ckpt, &teacher_path).unwrap();
    kdasc::model::save_checkpoint(&student_ckpt, &student_path).unwrap();
    store.save(&store_path).unwrap();
    let mut net = Checkpoint::restore(&student_ckpt).unwrap();
    let posteriors = predict_posteriors(&mut net, &data.eval, 8).unwrap();
    let labels: Vec<usize> = data.eval.iter().map(|s| s.label).collect();
    let metrics = kdasc::fusion::evaluate("student", &posteriors, &labels).unwrap();
    let table = kdasc::fusion::compare_systems(vec![metrics]).unwrap();
    let metrics_path = root.join("metrics.tsv");
    table.save(&metrics_path).unwrap();
    (
        std::fs::read(&teacher_path).unwrap(),
        std::fs::read(&student_path).unwrap(),
        std::fs::read(&store_path).unwrap(),
        std::fs::read(&metrics_path).unwrap(),
    )
}

#[test]
fn a8_reproducibility() {
    criterion("reproducibility", || {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_pipeline(d1.path());
        let b = run_pipeline(d2.path());
        assert_eq!(a.0, b.0, "teacher checkpoints differ");
        assert_eq!(a.1, b.1, "student checkpoints differ");
        assert_eq!(a.2, b.2, "embedding stores differ");
        assert_eq!(a.3, b.3, "metrics files differ");
    });
}
