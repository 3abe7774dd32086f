//! Confusion-matrix metrics and stratified k-fold evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{train, ClassifierSpec};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub false_pos: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.true_pos += 1,
            (true, false) => self.false_neg += 1,
            (false, false) => self.true_neg += 1,
            (false, true) => self.false_pos += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_neg + self.true_neg + self.false_pos
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["Sensitivity", "Specificity", "Precision", "F1", "Accuracy"];

    pub fn values(&self) -> [f64; 5] {
        [self.sensitivity, self.specificity, self.precision, self.f1, self.accuracy]
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Metrics {
    let mut degenerate = false;
    let mut ratio = |num: u64, den: u64| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let ConfusionMatrix { true_pos: tp, false_neg: fn_, true_neg: tn, false_pos: fp } = *cm;
    let sensitivity = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    let precision = ratio(tp, tp + fp);
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    let accuracy = ratio(tp + tn, cm.total());
    Metrics { sensitivity, specificity, precision, f1, accuracy, degenerate }
}

/// Fold index (0..k) per sample. Each class is shuffled and dealt
/// round-robin, continuing where the previous class stopped, so fold
/// sizes stay within one of each other overall and per class.
pub fn stratified_kfold(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::config("k", format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; y.len()];
    let mut offset = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Stratification { class, count: idx.len(), k });
        }
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset += idx.len();
    }
    Ok(folds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub test_indices: Vec<usize>,
    pub predictions: Vec<bool>,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub folds: Vec<FoldResult>,
    pub mean: [f64; 5],
    /// Sample standard deviation over folds.
    pub std: [f64; 5],
}

impl EvalReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let k = folds.len() as f64;
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        for m in 0..5 {
            mean[m] = folds.iter().map(|f| f.metrics.values()[m]).sum::<f64>() / k;
            if folds.len() > 1 {
                let ss: f64 = folds.iter().map(|f| (f.metrics.values()[m] - mean[m]).powi(2)).sum();
                std[m] = (ss / (k - 1.0)).sqrt();
            }
        }
        Self { folds, mean, std }
    }

    /// Rows Fold-1…Fold-k, Mean, Std; metric columns in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Row");
        for n in Metrics::NAMES {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        let mut row = |name: &str, v: [f64; 5]| {
            out.push_str(name);
            for x in v {
                let _ = write!(out, ",{:.2}", 100.0 * x);
            }
            out.push('\n');
        };
        for (i, f) in self.folds.iter().enumerate() {
            row(&format!("Fold-{}", i + 1), f.metrics.values());
        }
        row("Mean", self.mean);
        row("Std", self.std);
        out
    }

    /// Pooled confusion matrix over all folds.
    pub fn pooled(&self) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for f in &self.folds {
            cm.true_pos += f.confusion.true_pos;
            cm.false_neg += f.confusion.false_neg;
            cm.true_neg += f.confusion.true_neg;
            cm.false_pos += f.confusion.false_pos;
        }
        cm
    }
}

pub fn cross_validate(x: &[Vec<f64>], y: &[bool], spec: &ClassifierSpec, k: usize, seed: u64) -> Result<EvalReport> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape { expected: format!("{} labels", x.len()), actual: y.len().to_string() });
    }
    let assignment = stratified_kfold(y, k, seed)?;
    let folds = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (mut tx, mut ty, mut test) = (Vec::new(), Vec::new(), Vec::new());
            for (i, &a) in assignment.iter().enumerate() {
                if a == fold {
                    test.push(i);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            let wrap = |e: Error| Error::Fold { fold: fold + 1, source: Box::new(e) };
            let model = train(spec, &tx, &ty).map_err(wrap)?;
            let mut cm = ConfusionMatrix::default();
            let mut predictions = Vec::with_capacity(test.len());
            for &i in &test {
                let p = model.predict(&x[i]).map_err(wrap)?;
                cm.record(y[i], p);
                predictions.push(p);
            }
            Ok(FoldResult { test_indices: test, predictions, confusion: cm, metrics: compute_metrics(&cm) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_folds(folds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassifierKind;
    use proptest::prelude::*;

    #[test]
    fn worked_metrics() {
        let m = compute_metrics(&ConfusionMatrix { true_pos: 80, false_neg: 20, true_neg: 70, false_pos: 30 });
        assert_eq!(m.sensitivity, 0.8);
        assert_eq!(m.specificity, 0.7);
        assert!((m.precision - 0.7273).abs() < 5e-5);
        assert!((m.f1 - 0.7619).abs() < 5e-5);
        assert_eq!(m.accuracy, 0.75);
        assert!(!m.degenerate);
        let ones = compute_metrics(&ConfusionMatrix { true_pos: 1, false_neg: 0, true_neg: 1, false_pos: 0 });
        assert_eq!(ones.values(), [1.0; 5]);
        let empty = compute_metrics(&ConfusionMatrix { true_pos: 0, false_neg: 0, true_neg: 3, false_pos: 0 });
        assert_eq!(empty.sensitivity, 0.0);
        assert!(empty.degenerate);
    }

    #[test]
    fn table_sized_folds() {
        let y: Vec<bool> = (0..109).map(|i| i < 72).collect();
        let folds = stratified_kfold(&y, 5, 42).unwrap();
        for f in 0..5 {
            let mi = (0..109).filter(|&i| folds[i] == f && y[i]).count();
            let non = (0..109).filter(|&i| folds[i] == f && !y[i]).count();
            assert!((14..=15).contains(&mi), "fold {f}: {mi} MI");
            assert!((7..=8).contains(&non), "fold {f}: {non} non-MI");
        }
    }

    #[test]
    fn k_members_give_one_per_fold() {
        let y = [true, true, true, false, false, false];
        let folds = stratified_kfold(&y, 3, 1).unwrap();
        for f in 0..3 {
            assert_eq!((0..6).filter(|&i| folds[i] == f && y[i]).count(), 1);
            assert_eq!((0..6).filter(|&i| folds[i] == f && !y[i]).count(), 1);
        }
    }

    #[test]
    fn small_class_cannot_stratify() {
        let y = [true, true, true, true, true, false, false];
        assert!(matches!(stratified_kfold(&y, 5, 0), Err(Error::Stratification { class: false, count: 2, k: 5 })));
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(pos in 5usize..60, neg in 5usize..60, k in 2usize..6, seed in any::<u64>()) {
            let y: Vec<bool> = (0..pos + neg).map(|i| (i * 7919) % (pos + neg) < pos).collect();
            let a = stratified_kfold(&y, k, seed).unwrap();
            prop_assert_eq!(&a, &stratified_kfold(&y, k, seed).unwrap());
            for class in [true, false] {
                let n = y.iter().filter(|&&v| v == class).count();
                for f in 0..k {
                    let c = (0..y.len()).filter(|&i| a[i] == f && y[i] == class).count();
                    prop_assert!(c == n / k || c == n / k + 1);
                }
            }
            prop_assert!(a.iter().all(|&f| f < k));
        }
    }

    #[test]
    fn separable_features_score_perfectly() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![if i < 25 { 0.9 } else { 0.1 } + (i % 5) as f64 * 0.01]).collect();
        let y: Vec<bool> = (0..40).map(|i| i < 25).collect();
        for kind in ClassifierKind::ALL {
            let r = cross_validate(&x, &y, &ClassifierSpec::new(kind), 5, 3).unwrap();
            assert_eq!(r.mean[0], 1.0, "{kind:?}");
            assert_eq!(r.mean[1], 1.0, "{kind:?}");
            assert_eq!(r.folds.len(), 5);
        }
    }

    #[test]
    fn report_layout() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let csv = cross_validate(&x, &y, &ClassifierSpec::new(ClassifierKind::Rf), 5, 0).unwrap().to_csv();
        let rows: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(rows, ["Row", "Fold-1", "Fold-2", "Fold-3", "Fold-4", "Fold-5", "Mean", "Std"]);
        assert!(csv.starts_with("Row,Sensitivity,Specificity,Precision,F1,Accuracy\n"));
    }
}
