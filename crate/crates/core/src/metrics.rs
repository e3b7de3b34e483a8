//! Five-class staging metrics, subject-level cluster bootstrap intervals
//! and stratified epoch sampling for expert review.

use crate::rules::Stage;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("subject too short: {available} epochs, {requested} requested")]
    ShortSubject { available: usize, requested: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPredictions {
    pub subject_id: String,
    pub truth: Vec<Stage>,
    pub pred: Vec<Stage>,
}

/// Aligned truth/prediction sequences, one nonempty pair per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPredictions {
    subjects: Vec<SubjectPredictions>,
}

impl LabeledPredictions {
    pub fn new(subjects: Vec<SubjectPredictions>) -> Result<Self, MetricsError> {
        for s in &subjects {
            if s.truth.len() != s.pred.len() {
                return Err(MetricsError::Invalid(format!(
                    "{}: {} true labels vs {} predictions",
                    s.subject_id,
                    s.truth.len(),
                    s.pred.len()
                )));
            }
            if s.truth.is_empty() {
                return Err(MetricsError::Invalid(format!("{}: no epochs", s.subject_id)));
            }
        }
        if subjects.is_empty() {
            return Err(MetricsError::Invalid("no subjects".into()));
        }
        Ok(LabeledPredictions { subjects })
    }

    pub fn subjects(&self) -> &[SubjectPredictions] {
        &self.subjects
    }

    pub fn n_epochs(&self) -> usize {
        self.subjects.iter().map(|s| s.truth.len()).sum()
    }
}

/// Counts indexed `[true][predicted]` in W, N1, N2, N3, R order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[Stage], pred: &[Stage]) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(pred) {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for i in 0..5 {
            for j in 0..5 {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Rows divided by their sums; empty rows stay zero.
    pub fn normalized(&self) -> [[f64; 5]; 5] {
        let mut out = [[0.0; 5]; 5];
        for (i, row) in self.counts.iter().enumerate() {
            let n = self.row_sum(i);
            if n > 0 {
                for j in 0..5 {
                    out[i][j] = row[j] as f64 / n as f64;
                }
            }
        }
        out
    }
}

pub fn confusion_matrix(data: &LabeledPredictions) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for s in &data.subjects {
        m.add(&ConfusionMatrix::from_pairs(&s.truth, &s.pred));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub per_class_f1: [f64; 5],
    pub macro_f1: f64,
    pub kappa: f64,
    /// Set when chance agreement is 1 and kappa is reported as 0.
    pub kappa_degenerate: bool,
}

/// Classes absent from both truth and prediction contribute an F1 of 0 to
/// the macro average.
pub fn metrics_from_confusion(m: &ConfusionMatrix) -> ClassificationMetrics {
    let n = m.total() as f64;
    let diag: u64 = (0..5).map(|i| m.counts[i][i]).sum();
    let accuracy = if n > 0.0 { diag as f64 / n } else { 0.0 };
    let mut per_class_f1 = [0.0; 5];
    for (k, f1) in per_class_f1.iter_mut().enumerate() {
        let tp = m.counts[k][k] as f64;
        let denom = (m.row_sum(k) + m.col_sum(k)) as f64;
        *f1 = if denom > 0.0 { 2.0 * tp / denom } else { 0.0 };
    }
    let macro_f1 = per_class_f1.iter().sum::<f64>() / 5.0;
    let p_e = if n > 0.0 {
        (0..5).map(|k| (m.row_sum(k) as f64 / n) * (m.col_sum(k) as f64 / n)).sum::<f64>()
    } else {
        1.0
    };
    let degenerate = (1.0 - p_e).abs() < 1e-15;
    let kappa = if degenerate { 0.0 } else { (accuracy - p_e) / (1.0 - p_e) };
    ClassificationMetrics { accuracy, per_class_f1, macro_f1, kappa, kappa_degenerate: degenerate }
}

pub fn classification_metrics(data: &LabeledPredictions) -> ClassificationMetrics {
    metrics_from_confusion(&confusion_matrix(data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub accuracy: [f64; 2],
    pub macro_f1: [f64; 2],
    pub kappa: [f64; 2],
}

fn subject_confusions(data: &LabeledPredictions) -> Vec<ConfusionMatrix> {
    data.subjects.iter().map(|s| ConfusionMatrix::from_pairs(&s.truth, &s.pred)).collect()
}

/// Metrics of each resample. Resample `r` draws its subjects from a
/// ChaCha8 generator seeded with `seed` on stream `r`, so the result does
/// not depend on thread scheduling.
pub fn bootstrap_distribution(
    data: &LabeledPredictions,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<ClassificationMetrics>, MetricsError> {
    let per_subject = subject_confusions(data);
    let k = per_subject.len();
    if k < 2 {
        return Err(MetricsError::Degenerate(format!("{k} subject(s); the cluster bootstrap needs at least 2")));
    }
    Ok((0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut pooled = ConfusionMatrix::default();
            for _ in 0..k {
                pooled.add(&per_subject[rng.random_range(0..k)]);
            }
            metrics_from_confusion(&pooled)
        })
        .collect())
}

/// Percentile interval with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn cluster_bootstrap_ci(
    data: &LabeledPredictions,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceIntervals, MetricsError> {
    if !(0.0 < level && level < 1.0) || n_resamples == 0 {
        return Err(MetricsError::Invalid(format!("level {level}, {n_resamples} resamples")));
    }
    let dist = bootstrap_distribution(data, n_resamples, seed)?;
    let tail = (1.0 - level) / 2.0;
    let interval = |f: fn(&ClassificationMetrics) -> f64| {
        let mut v: Vec<f64> = dist.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        [percentile(&v, tail), percentile(&v, 1.0 - tail)]
    };
    Ok(ConfidenceIntervals {
        level,
        n_resamples,
        seed,
        accuracy: interval(|m| m.accuracy),
        macro_f1: interval(|m| m.macro_f1),
        kappa: interval(|m| m.kappa),
    })
}

/// Every ordered draw of `k` subjects from `k`, with its probability
/// `k^-k`. Only meant for tiny cohorts; fails above 7 subjects.
pub fn exact_bootstrap_distribution(
    data: &LabeledPredictions,
) -> Result<Vec<(ClassificationMetrics, f64)>, MetricsError> {
    let per_subject = subject_confusions(data);
    let k = per_subject.len();
    if !(2..=7).contains(&k) {
        return Err(MetricsError::Invalid(format!("exact enumeration supports 2 to 7 subjects, got {k}")));
    }
    let total = k.pow(k as u32);
    let p = 1.0 / total as f64;
    Ok((0..total)
        .map(|mut code| {
            let mut pooled = ConfusionMatrix::default();
            for _ in 0..k {
                pooled.add(&per_subject[code % k]);
                code /= k;
            }
            (metrics_from_confusion(&pooled), p)
        })
        .collect())
}

/// Largest-remainder allocation of `k` seats over the stage counts.
/// Equal remainders go to the earlier stage in W, N1, N2, N3, R order.
pub fn largest_remainder_quotas(counts: [usize; 5], k: usize) -> [usize; 5] {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return [0; 5];
    }
    let mut quotas = [0usize; 5];
    let mut rems = [0u128; 5];
    for s in 0..5 {
        let num = k as u128 * counts[s] as u128;
        quotas[s] = (num / total as u128) as usize;
        rems[s] = num % total as u128;
    }
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    let left = k - quotas.iter().sum::<usize>();
    for &s in order.iter().take(left) {
        quotas[s] += 1;
    }
    quotas
}

/// Draws `k` epoch ids with stage quotas from [`largest_remainder_quotas`],
/// uniformly without replacement inside each stage. Ids come back in input
/// order.
pub fn stratified_sample(
    subject_epochs: &[(String, Stage)],
    k: usize,
    seed: u64,
) -> Result<Vec<String>, MetricsError> {
    if subject_epochs.len() < k {
        return Err(MetricsError::ShortSubject { available: subject_epochs.len(), requested: k });
    }
    let mut by_stage: [Vec<usize>; 5] = Default::default();
    for (i, (_, s)) in subject_epochs.iter().enumerate() {
        by_stage[s.index()].push(i);
    }
    let counts = by_stage.each_ref().map(Vec::len);
    let quotas = largest_remainder_quotas(counts, k);
    let mut chosen = Vec::with_capacity(k);
    for s in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        for j in sample_indices(&mut rng, by_stage[s].len(), quotas[s]) {
            chosen.push(by_stage[s][j]);
        }
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| subject_epochs[i].0.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_subjects: usize,
    pub n_epochs: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    pub per_class_f1: [f64; 5],
    pub confusion: ConfusionMatrix,
    pub confusion_normalized: [[f64; 5]; 5],
    /// Absent when fewer than two subjects are available.
    pub ci: Option<ConfidenceIntervals>,
    pub seed: u64,
}

pub fn build_report(
    data: &LabeledPredictions,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<MetricsReport, MetricsError> {
    let confusion = confusion_matrix(data);
    let m = metrics_from_confusion(&confusion);
    let ci = if data.subjects.len() >= 2 { Some(cluster_bootstrap_ci(data, n_resamples, level, seed)?) } else { None };
    Ok(MetricsReport {
        n_subjects: data.subjects.len(),
        n_epochs: data.n_epochs(),
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        kappa: m.kappa,
        kappa_degenerate: m.kappa_degenerate,
        per_class_f1: m.per_class_f1,
        confusion,
        confusion_normalized: confusion.normalized(),
        ci,
        seed,
    })
}

impl MetricsReport {
    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        let ci = |iv: Option<[f64; 2]>| iv.map(|[a, b]| format!("[{a:.3}, {b:.3}]")).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "subjects {}  epochs {}  seed {}", self.n_subjects, self.n_epochs, self.seed);
        let ci_label = self.ci.map(|c| format!("{}% CI", c.level * 100.0)).unwrap_or_else(|| "CI".into());
        let _ = writeln!(s, "{:<10} {:>7}  {ci_label}", "metric", "value");
        let _ = writeln!(s, "{:<10} {:>7.3}  {}", "accuracy", self.accuracy, ci(self.ci.map(|c| c.accuracy)));
        let _ = writeln!(s, "{:<10} {:>7.3}  {}", "macro-F1", self.macro_f1, ci(self.ci.map(|c| c.macro_f1)));
        let kappa_note = if self.kappa_degenerate { "  (degenerate)" } else { "" };
        let _ = writeln!(s, "{:<10} {:>7.3}  {}{}", "kappa", self.kappa, ci(self.ci.map(|c| c.kappa)), kappa_note);
        let _ = writeln!(s);
        let _ = write!(s, "{:<10}", "F1");
        for st in Stage::ALL {
            let _ = write!(s, " {:>6}", st.as_str());
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<10}", "");
        for f in self.per_class_f1 {
            let _ = write!(s, " {f:>6.3}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s);
        let _ = write!(s, "{:<10}", "true\\pred");
        for st in Stage::ALL {
            let _ = write!(s, " {:>6}", st.as_str());
        }
        let _ = writeln!(s);
        for st in Stage::ALL {
            let _ = write!(s, "{:<10}", st.as_str());
            for v in self.confusion_normalized[st.index()] {
                let _ = write!(s, " {v:>6.3}");
            }
            let _ = writeln!(s);
        }
        s
    }
}
