//! Train/validation/test splitting and the classification metric surface:
//! confusion matrices, ROC curves with trapezoidal AUC, error histograms,
//! and the on-disk report bundle.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mlp::{MlpError, MlpModel, TraceSummary, TrainTrace};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 3 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    InvalidFractions((f64, f64, f64)),
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("ROC needs both classes present")]
    SingleClassInput,
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.70, 0.15, 0.15);
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

impl SplitName {
    pub const PARTS: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];
    pub const WITH_ALL: [SplitName; 4] = [
        SplitName::Train,
        SplitName::Validation,
        SplitName::Test,
        SplitName::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
            SplitName::All => "all",
        }
    }
}

/// Disjoint row-index lists covering every row exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl DataSplits {
    pub fn indices(&self, name: SplitName) -> Vec<usize> {
        match name {
            SplitName::Train => self.train.clone(),
            SplitName::Validation => self.validation.clone(),
            SplitName::Test => self.test.clone(),
            SplitName::All => {
                let mut all: Vec<usize> = self
                    .train
                    .iter()
                    .chain(&self.validation)
                    .chain(&self.test)
                    .copied()
                    .collect();
                all.sort_unstable();
                all
            }
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Seeded shuffle followed by contiguous assignment. The train and
/// validation sizes are `round(fraction * rows)`; test takes the remainder.
pub fn split(rows: usize, fractions: (f64, f64, f64), seed: u64) -> Result<DataSplits, EvalError> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(EvalError::InvalidFractions(fractions));
    }
    if rows < 3 {
        return Err(EvalError::TooFewRows(rows));
    }
    let mut order: Vec<usize> = (0..rows).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let n_train = ((ft * rows as f64).round() as usize).min(rows);
    let n_val = ((fv * rows as f64).round() as usize).min(rows - n_train);
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(DataSplits {
        train: order,
        validation,
        test,
        fractions,
        seed,
    })
}

/// Binary confusion counts with churn (label 1) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Output-class rows by target-class columns.
    pub fn to_csv(&self) -> String {
        format!(
            "output\\target,0,1\n0,{},{}\n1,{},{}\n",
            self.tn, self.fn_, self.fp, self.tp
        )
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    if labels.len() != predictions.len() || labels.is_empty() {
        return Err(EvalError::LengthMismatch(labels.len(), predictions.len()));
    }
    let mut m = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l == 1, p == 1) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (false, false) => m.tn += 1,
            (true, false) => m.fn_ += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        s
    }
}

/// Sweeps every distinct score from high to low, tied scores moving
/// together. The area is accumulated from integer counts so it matches the
/// Mann–Whitney formulation (ties counted as one half).
pub fn roc(labels: &[u8], scores: &[f64]) -> Result<RocCurve, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch(labels.len(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one positive-negative pair.
    let mut twice_area: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        let (prev_tp, prev_fp) = (tp, fp);
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        twice_area += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = twice_area as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

/// `target - output` of the positive-class component for each row.
pub fn positive_class_errors(targets: &[f64], outputs: &[f64], n_out: usize) -> Result<Vec<f64>, EvalError> {
    if n_out < 2 || targets.len() != outputs.len() || !targets.len().is_multiple_of(n_out) {
        return Err(EvalError::ShapeMismatch(format!(
            "{} targets vs {} outputs with {n_out} classes",
            targets.len(),
            outputs.len()
        )));
    }
    Ok(targets
        .chunks_exact(n_out)
        .zip(outputs.chunks_exact(n_out))
        .map(|(t, o)| t[1] - o[1])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub split: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<SplitCounts>,
}

impl ErrorHistogram {
    pub fn counts_for(&self, split: &str) -> Option<&[usize]> {
        self.counts
            .iter()
            .find(|c| c.split == split)
            .map(|c| c.counts.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi");
        for c in &self.counts {
            s.push(',');
            s.push_str(&c.split);
        }
        s.push('\n');
        for b in 0..self.bin_edges.len() - 1 {
            let _ = write!(s, "{},{}", self.bin_edges[b], self.bin_edges[b + 1]);
            for c in &self.counts {
                let _ = write!(s, ",{}", c.counts[b]);
            }
            s.push('\n');
        }
        s
    }
}

/// Uniform bins over the observed `[min, max]` error range of all groups
/// combined. A zero-width range is widened to `[e - 0.5, e + 0.5]`. The
/// maximum value falls into the last bin.
pub fn error_histogram(groups: &[(&str, &[f64])], bins: usize) -> Result<ErrorHistogram, EvalError> {
    if bins == 0 {
        return Err(EvalError::ShapeMismatch("need at least one bin".into()));
    }
    let all = groups.iter().flat_map(|(_, e)| e.iter().copied());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e), hi.max(e))
    });
    if !lo.is_finite() || !hi.is_finite() {
        if groups.iter().any(|(_, e)| !e.is_empty()) {
            return Err(EvalError::NonFiniteScore);
        }
        (lo, hi) = (0.0, 0.0);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..bins).map(|k| lo + k as f64 * width).collect();
    bin_edges.push(hi);
    let counts = groups
        .iter()
        .map(|(name, errors)| {
            let mut counts = vec![0usize; bins];
            for &e in errors.iter() {
                let idx = (((e - lo) / width).floor() as usize).min(bins - 1);
                counts[idx] += 1;
            }
            SplitCounts {
                split: name.to_string(),
                counts,
            }
        })
        .collect();
    Ok(ErrorHistogram { bin_edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub split: SplitName,
    pub samples: usize,
    pub confusion: Option<ConfusionMatrix>,
    pub accuracy: Option<f64>,
    /// Absent when the split holds a single class.
    pub auc: Option<f64>,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
}

/// Everything the report bundle contains. `generated_at` is the only
/// field that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub generated_at: u64,
    pub split_sizes: (usize, usize, usize),
    pub split_fractions: (f64, f64, f64),
    pub split_seed: u64,
    pub threshold: f64,
    pub overall_accuracy: f64,
    pub best_validation_epoch: Option<usize>,
    pub splits: Vec<SplitEvaluation>,
    pub error_histogram: ErrorHistogram,
    pub training: TraceSummary,
    #[serde(skip)]
    pub trace: TrainTrace,
}

impl EvalReport {
    pub fn split(&self, name: SplitName) -> &SplitEvaluation {
        self.splits.iter().find(|s| s.split == name).expect("all four splits are evaluated")
    }

    /// Report JSON without the timestamp, for reproducibility comparisons.
    pub fn payload_json(&self) -> Result<String, EvalError> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("generated_at");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &TrainTrace) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("epoch,train_loss,val_loss,test_loss,grad_norm\n");
    for r in &trace.epochs {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            opt(r.validation_loss),
            opt(r.test_loss),
            r.gradient_norm
        );
    }
    s
}

fn gather(values: &[f64], width: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .flat_map(|&i| values[i * width..(i + 1) * width].iter().copied())
        .collect()
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Evaluates `model` on every split of `features` (`rows x n_in`, already
/// scaled for the network) and assembles the report.
pub fn evaluate(
    model: &MlpModel,
    features: &[f64],
    labels: &[u8],
    splits: &DataSplits,
    trace: &TrainTrace,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let n_in = model.n_inputs();
    let n_out = model.n_outputs();
    if features.len() != labels.len() * n_in {
        return Err(EvalError::ShapeMismatch(format!(
            "{} feature values for {} rows of {n_in}",
            features.len(),
            labels.len()
        )));
    }
    let probs = model.forward(features)?;
    let predictions = crate::mlp::labels_from_probabilities(&probs, n_out, threshold)?;
    let targets = crate::mlp::one_hot(labels);

    let mut evaluations = Vec::new();
    let mut errors: Vec<(SplitName, Vec<f64>)> = Vec::new();
    for name in SplitName::WITH_ALL {
        let idx = splits.indices(name);
        if idx.iter().any(|&i| i >= labels.len()) {
            return Err(EvalError::ShapeMismatch("split index out of range".into()));
        }
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let yhat: Vec<u8> = idx.iter().map(|&i| predictions[i]).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| probs[i * n_out + 1]).collect();
        let cm = if idx.is_empty() { None } else { Some(confusion(&y, &yhat)?) };
        let curve = match roc(&y, &scores) {
            Ok(c) => Some(c),
            Err(EvalError::SingleClassInput) => None,
            Err(e) => return Err(e),
        };
        if name != SplitName::All {
            errors.push((
                name,
                positive_class_errors(&gather(&targets, 2, &idx), &gather(&probs, n_out, &idx), n_out)?,
            ));
        }
        evaluations.push(SplitEvaluation {
            split: name,
            samples: idx.len(),
            accuracy: cm.map(|c| c.accuracy()),
            confusion: cm,
            auc: curve.as_ref().map(|c| c.auc),
            roc: curve,
        });
    }
    let groups: Vec<(&str, &[f64])> = errors.iter().map(|(n, e)| (n.as_str(), e.as_slice())).collect();
    let error_histogram = error_histogram(&groups, DEFAULT_HISTOGRAM_BINS)?;
    let overall_accuracy = evaluations
        .iter()
        .find(|e| e.split == SplitName::All)
        .and_then(|e| e.accuracy)
        .unwrap_or(0.0);

    Ok(EvalReport {
        generated_at: now_unix(),
        split_sizes: splits.sizes(),
        split_fractions: splits.fractions,
        split_seed: splits.seed,
        threshold,
        overall_accuracy,
        best_validation_epoch: trace.best_validation_epoch,
        splits: evaluations,
        error_histogram,
        training: trace.summary(),
        trace: trace.clone(),
    })
}

/// Writes `report.json`, `confusion_<split>.csv`, `roc.csv` (all samples),
/// `roc_<split>.csv`, `error_hist.csv` and `trace.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("report.json".into(), serde_json::to_string_pretty(report)? + "\n")?;
    for e in &report.splits {
        if let Some(cm) = &e.confusion {
            put(format!("confusion_{}.csv", e.split.as_str()), cm.to_csv())?;
        }
        if let Some(curve) = &e.roc {
            let name = if e.split == SplitName::All {
                "roc.csv".to_string()
            } else {
                format!("roc_{}.csv", e.split.as_str())
            };
            put(name, curve.to_csv())?;
        }
    }
    put("error_hist.csv".into(), report.error_histogram.to_csv())?;
    put("trace.csv".into(), report.trace_csv())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mann_whitney(labels: &[u8], scores: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn split_sizes() {
        let s = split(100, DEFAULT_FRACTIONS, 3).unwrap();
        assert_eq!(s.sizes(), (70, 15, 15));
        let s = split(3334, DEFAULT_FRACTIONS, 3).unwrap();
        assert_eq!(s.sizes(), (2334, 500, 500));
        let s = split(3333, DEFAULT_FRACTIONS, 3).unwrap();
        assert_eq!(s.sizes(), (2333, 500, 500));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let a = split(257, DEFAULT_FRACTIONS, 99).unwrap();
        assert_eq!(a, split(257, DEFAULT_FRACTIONS, 99).unwrap());
        assert_ne!(a.train, split(257, DEFAULT_FRACTIONS, 100).unwrap().train);
        assert_eq!(a.indices(SplitName::All), (0..257).collect::<Vec<_>>());
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split(2, DEFAULT_FRACTIONS, 0), Err(EvalError::TooFewRows(2))));
        assert!(matches!(
            split(10, (0.5, 0.5, 0.5), 0),
            Err(EvalError::InvalidFractions(_))
        ));
        assert!(split(10, (0.8, 0.2, 0.0), 0).is_err());
    }

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (1, 1, 1, 1));
        assert_eq!(cm.accuracy(), 0.5);
        let cm = confusion(&[1, 0, 0], &[1, 0, 0]).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        assert_eq!(cm.accuracy(), 1.0);
        assert!(matches!(confusion(&[1], &[1, 0]), Err(EvalError::LengthMismatch(1, 2))));
        assert!(confusion(&[], &[]).is_err());
        assert_eq!(
            confusion(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap().to_csv(),
            "output\\target,0,1\n0,1,1\n1,1,1\n"
        );
    }

    #[test]
    fn roc_reference_cases() {
        assert_eq!(roc(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.2]).unwrap().auc, 0.75);
        assert_eq!(roc(&[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.1]).unwrap().auc, 1.0);
        assert_eq!(roc(&[0, 0, 1, 1], &[0.9, 0.8, 0.3, 0.1]).unwrap().auc, 0.0);
        assert_eq!(roc(&[1, 0], &[0.5, 0.5]).unwrap().auc, 0.5);
        assert!(matches!(roc(&[1, 1], &[0.1, 0.2]), Err(EvalError::SingleClassInput)));
        assert!(matches!(roc(&[1, 0], &[0.1, f64::NAN]), Err(EvalError::NonFiniteScore)));
    }

    #[test]
    fn roc_curve_shape() {
        let c = roc(&[1, 0, 1, 0, 1], &[0.9, 0.9, 0.4, 0.2, 0.2]).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        // One point per distinct score plus the sentinel.
        assert_eq!(c.points.len(), 4);
        assert!(c.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        let trapezoid: f64 = c
            .points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum();
        assert!((trapezoid - c.auc).abs() < 1e-12);
        assert!((c.auc - mann_whitney(&[1, 0, 1, 0, 1], &[0.9, 0.9, 0.4, 0.2, 0.2])).abs() < 1e-12);
        assert!(c.to_csv().starts_with("threshold,fpr,tpr\ninf,0,0\n"));
    }

    #[test]
    fn histogram_cases() {
        let h = error_histogram(&[("train", &[-0.5, 0.5])], 2).unwrap();
        assert_eq!(h.bin_edges, vec![-0.5, 0.0, 0.5]);
        assert_eq!(h.counts_for("train").unwrap(), &[1, 1]);

        let zeros = [0.0; 6];
        let h = error_histogram(&[("train", &zeros)], 20).unwrap();
        assert_eq!(h.bin_edges.len(), 21);
        let populated: Vec<usize> = h.counts[0]
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(populated, vec![10]);
        assert_eq!(h.counts[0].counts[10], 6);
        assert!(error_histogram(&[("train", &zeros)], 0).is_err());
    }

    #[test]
    fn error_vector_shapes() {
        let e = positive_class_errors(&[0.0, 1.0, 1.0, 0.0], &[0.2, 0.8, 0.6, 0.4], 2).unwrap();
        assert!((e[0] - 0.2).abs() < 1e-15 && (e[1] + 0.4).abs() < 1e-15);
        assert!(matches!(
            positive_class_errors(&[0.0, 1.0], &[0.5], 2),
            Err(EvalError::ShapeMismatch(_))
        ));
    }
}
