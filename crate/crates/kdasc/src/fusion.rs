//! PROD late fusion, label decisions, and the tabular evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::dataset::SCENE_CLASSES;
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 10;
const LOGLOSS_CLAMP: f64 = 1e-12;

/// One model's class probabilities for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    pub probs: Vec<f64>,
}

impl ClassPosterior {
    pub fn new(probs: Vec<f64>) -> Result<ClassPosterior> {
        if probs.is_empty() {
            return Err(Error::Validation("empty posterior".into()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "posterior off the simplex (sum {sum})"
            )));
        }
        Ok(ClassPosterior { probs })
    }
}

/// Product fusion output. `fused` is (1/S) times the elementwise product of
/// the posteriors, which does not sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub fused: Vec<f64>,
    pub predicted_label: usize,
    pub model_count: usize,
}

/// fused_c = (1/S) * prod_s p_sc, computed in log space to avoid underflow.
pub fn prod_fuse(posteriors: &[ClassPosterior]) -> Result<FusionResult> {
    if posteriors.is_empty() {
        return Err(Error::Validation("nothing to fuse".into()));
    }
    let c = posteriors[0].probs.len();
    for p in posteriors {
        if p.probs.len() != c {
            return Err(Error::Shape("posterior lengths differ".into()));
        }
        if p.probs.iter().any(|&v| v < 0.0) {
            return Err(Error::Validation("negative posterior component".into()));
        }
    }
    let s = posteriors.len();
    let fused: Vec<f64> = (0..c)
        .map(|i| {
            if posteriors.iter().any(|p| p.probs[i] == 0.0) {
                return 0.0;
            }
            // summing in sorted order makes the result exactly invariant to
            // the order the models are listed in
            let mut logs: Vec<f64> = posteriors.iter().map(|p| p.probs[i].ln()).collect();
            logs.sort_by(|a, b| a.total_cmp(b));
            let log_sum: f64 = logs.iter().sum::<f64>() - (s as f64).ln();
            log_sum.exp()
        })
        .collect();
    let predicted_label = decide_label(&fused)?;
    Ok(FusionResult { fused, predicted_label, model_count: s })
}

/// Lowest-index argmax.
pub fn decide_label(fused: &[f64]) -> Result<usize> {
    if fused.is_empty() {
        return Err(Error::Validation("empty score vector".into()));
    }
    if fused.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("NaN in score vector".into()));
    }
    let mut best = 0;
    for (i, &v) in fused.iter().enumerate().skip(1) {
        if v > fused[best] {
            best = i;
        }
    }
    Ok(best)
}

fn clamped_neg_log(p: f64) -> f64 {
    -p.clamp(LOGLOSS_CLAMP, 1.0 - LOGLOSS_CLAMP).ln()
}

/// One evaluated system: a name plus per-class accuracy / log loss rows.
/// `None` marks a class absent from the evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub name: String,
    pub per_class: Vec<Option<(f64, f64)>>,
    pub average_accuracy: f64,
    pub average_logloss: f64,
    pub memory_kb: Option<f64>,
    pub macs_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub class_names: Vec<String>,
    pub systems: Vec<SystemMetrics>,
}

/// Per-class accuracy and log loss for one system's per-sample score
/// vectors. Fused vectors are renormalized to sum 1 before the log loss;
/// accuracy uses the raw argmax, which normalization cannot change.
pub fn evaluate(
    name: &str,
    scores: &[Vec<f64>],
    labels: &[usize],
) -> Result<SystemMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("no samples".into()));
    }
    let mut correct = [0usize; NUM_CLASSES];
    let mut count = [0usize; NUM_CLASSES];
    let mut nll = [0.0f64; NUM_CLASSES];
    for (score, &label) in scores.iter().zip(labels) {
        if label >= NUM_CLASSES {
            return Err(Error::Validation(format!("label {label} out of range")));
        }
        let total: f64 = score.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::Validation(format!(
                "score vector sums to {total}, cannot renormalize"
            )));
        }
        count[label] += 1;
        if decide_label(score)? == label {
            correct[label] += 1;
        }
        nll[label] += clamped_neg_log(score[label] / total);
    }
    let per_class: Vec<Option<(f64, f64)>> = (0..NUM_CLASSES)
        .map(|c| {
            (count[c] > 0)
                .then(|| (correct[c] as f64 / count[c] as f64, nll[c] / count[c] as f64))
        })
        .collect();
    let present: Vec<(f64, f64)> = per_class.iter().flatten().copied().collect();
    if present.len() < NUM_CLASSES {
        eprintln!(
            "warning: {} of {NUM_CLASSES} classes absent from the evaluation split",
            NUM_CLASSES - present.len()
        );
    }
    let n = present.len() as f64;
    Ok(SystemMetrics {
        name: name.to_string(),
        per_class,
        average_accuracy: present.iter().map(|r| r.0).sum::<f64>() / n,
        average_logloss: present.iter().map(|r| r.1).sum::<f64>() / n,
        memory_kb: None,
        macs_m: None,
    })
}

/// External reference column (e.g. a published baseline's averages only).
pub fn reference_system(name: &str, accuracy: f64, logloss: f64) -> SystemMetrics {
    SystemMetrics {
        name: name.to_string(),
        per_class: vec![None; NUM_CLASSES],
        average_accuracy: accuracy,
        average_logloss: logloss,
        memory_kb: None,
        macs_m: None,
    }
}

/// Side-by-side comparison of systems sharing the class set.
pub fn compare_systems(systems: Vec<SystemMetrics>) -> Result<MetricsTable> {
    if systems.is_empty() {
        return Err(Error::EmptyInput("no systems".into()));
    }
    for s in &systems {
        if s.per_class.len() != NUM_CLASSES {
            return Err(Error::Validation(format!(
                "system {} has {} class rows, expected {NUM_CLASSES}",
                s.name,
                s.per_class.len()
            )));
        }
    }
    Ok(MetricsTable {
        class_names: SCENE_CLASSES.iter().map(|s| s.to_string()).collect(),
        systems,
    })
}

impl MetricsTable {
    /// Tab-separated emission: class rows with acc/logloss pairs per system,
    /// then Average, Memory (KB), and MACs (M) rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class");
        for s in &self.systems {
            out.push_str(&format!("\t{}_acc\t{}_logloss", s.name, s.name));
        }
        out.push('\n');
        for (c, class_name) in self.class_names.iter().enumerate() {
            out.push_str(class_name);
            for s in &self.systems {
                match s.per_class[c] {
                    Some((acc, ll)) => {
                        out.push_str(&format!("\t{:.1}\t{:.4}", acc * 100.0, ll))
                    }
                    None => out.push_str("\tabsent\tabsent"),
                }
            }
            out.push('\n');
        }
        out.push_str("Average");
        for s in &self.systems {
            out.push_str(&format!(
                "\t{:.1}\t{:.4}",
                s.average_accuracy * 100.0,
                s.average_logloss
            ));
        }
        out.push('\n');
        out.push_str("Memory (KB)");
        for s in &self.systems {
            match s.memory_kb {
                Some(kb) => out.push_str(&format!("\t{kb:.1}\t")),
                None => out.push_str("\t-\t"),
            }
        }
        out.push('\n');
        out.push_str("MACs (M)");
        for s in &self.systems {
            match s.macs_m {
                Some(m) => out.push_str(&format!("\t{m:.2}\t")),
                None => out.push_str("\t-\t"),
            }
        }
        out.push('\n');
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}
