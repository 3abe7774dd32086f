//! MI classifiers over per-echo feature vectors. Positive = MI.

mod eval;
mod lda;
mod svm;
mod tree;

use std::path::Path;

pub use eval::{compute_metrics, cross_validate, stratified_kfold, ConfusionMatrix, EvalReport, FoldResult, Metrics};
pub use lda::Lda;
pub use svm::{kkt_residual, rbf, Svm, SvmSolution};
pub use tree::{DecisionTree, Node, RandomForest};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Lda,
    Dt,
    Rf,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [ClassifierKind::Lda, ClassifierKind::Dt, ClassifierKind::Rf, ClassifierKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Lda => "lda",
            ClassifierKind::Dt => "dt",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Svm => "svm",
        }
    }

    fn tag(self) -> u8 {
        match self {
            ClassifierKind::Lda => 1,
            ClassifierKind::Dt => 2,
            ClassifierKind::Rf => 3,
            ClassifierKind::Svm => 4,
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("classifier", format!("expected lda, dt, rf or svm, got `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub rf_trees: usize,
    /// Minimum Gini decrease for a tree split; `None` disables pruning.
    pub dt_min_impurity_decrease: Option<f64>,
    pub svm_cost: f64,
    /// `None` means `1 / feature_count`.
    pub svm_gamma: Option<f64>,
    pub svm_tolerance: f64,
    /// Per-fold min-max scaling of features before training.
    pub scale: bool,
    pub rng_seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        Self {
            kind,
            rf_trees: 10,
            dt_min_impurity_decrease: Some(1e-3),
            svm_cost: svm::DEFAULT_COST,
            svm_gamma: None,
            svm_tolerance: svm::DEFAULT_TOLERANCE,
            scale: false,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rf_trees == 0 {
            return Err(Error::config("rf_trees", "must be at least 1"));
        }
        if !(self.svm_cost > 0.0 && self.svm_cost.is_finite()) {
            return Err(Error::config("svm_cost", format!("must be positive, got {}", self.svm_cost)));
        }
        if let Some(g) = self.svm_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config("svm_gamma", format!("must be positive, got {g}")));
            }
        }
        if !(self.svm_tolerance > 0.0) {
            return Err(Error::config("svm_tolerance", "must be positive"));
        }
        if let Some(m) = self.dt_min_impurity_decrease {
            if !(m >= 0.0) {
                return Err(Error::config("dt_min_impurity_decrease", "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Lda(Lda),
    Tree(DecisionTree),
    Forest(RandomForest),
    Svm(Svm),
}

/// Per-feature affine map onto `[0, 1]` fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in x {
            for (k, &v) in row.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub n_features: usize,
    pub scaler: Option<MinMax>,
    pub classifier: Classifier,
}

fn check_matrix(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::Shape { expected: format!("{} labels", x.len()), actual: y.len().to_string() });
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Shape { expected: format!("{d} features"), actual: format!("{} in row {i}", row.len()) });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("feature matrix", format!("row {i} has a non-finite value")));
        }
    }
    Ok(d)
}

pub fn train(spec: &ClassifierSpec, x: &[Vec<f64>], y: &[bool]) -> Result<Model> {
    spec.validate()?;
    let d = check_matrix(x, y)?;
    tree::check_two_classes(y)?;
    let scaler = spec.scale.then(|| MinMax::fit(x));
    let scaled;
    let x = match &scaler {
        Some(s) => {
            scaled = x.iter().map(|r| s.apply(r)).collect::<Vec<_>>();
            &scaled[..]
        }
        None => x,
    };
    let classifier = match spec.kind {
        ClassifierKind::Lda => Classifier::Lda(Lda::fit(x, y)?),
        ClassifierKind::Dt => Classifier::Tree(DecisionTree::fit(x, y, spec.dt_min_impurity_decrease)?),
        ClassifierKind::Rf => Classifier::Forest(RandomForest::fit(x, y, spec.rf_trees, spec.rng_seed)?),
        ClassifierKind::Svm => {
            let gamma = spec.svm_gamma.unwrap_or(1.0 / d.max(1) as f64);
            Classifier::Svm(Svm::fit(x, y, spec.svm_cost, gamma, spec.svm_tolerance)?)
        }
    };
    Ok(Model { n_features: d, scaler, classifier })
}

impl Model {
    pub fn kind(&self) -> ClassifierKind {
        match self.classifier {
            Classifier::Lda(_) => ClassifierKind::Lda,
            Classifier::Tree(_) => ClassifierKind::Dt,
            Classifier::Forest(_) => ClassifierKind::Rf,
            Classifier::Svm(_) => ClassifierKind::Svm,
        }
    }

    /// `true` = MI.
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.n_features {
            return Err(Error::Shape { expected: format!("{} features", self.n_features), actual: x.len().to_string() });
        }
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.apply(x);
                &scaled[..]
            }
            None => x,
        };
        Ok(match &self.classifier {
            Classifier::Lda(m) => m.decision(x) >= 0.0,
            Classifier::Tree(t) => t.predict(x),
            Classifier::Forest(f) => f.predict(x),
            Classifier::Svm(s) => s.predict(x),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MODEL_MAGIC, MODEL_VERSION);
        w.u8(self.kind().tag());
        w.usize(self.n_features);
        match &self.scaler {
            Some(s) => {
                w.u8(1);
                w.f64s(&s.min);
                w.f64s(&s.max);
            }
            None => w.u8(0),
        }
        match &self.classifier {
            Classifier::Lda(m) => {
                w.f64s(&m.weights);
                w.f64s(&m.midpoint);
            }
            Classifier::Tree(t) => write_tree(&mut w, t),
            Classifier::Forest(f) => {
                w.usize(f.trees.len());
                for t in &f.trees {
                    write_tree(&mut w, t);
                }
            }
            Classifier::Svm(s) => {
                w.f64(s.gamma);
                w.f64(s.rho);
                w.f64s(&s.coefficients);
                for sv in &s.support_vectors {
                    for &v in sv {
                        w.f64(v);
                    }
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::open("model file", bytes, MODEL_MAGIC)?;
        if version != MODEL_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let tag = r.u8()?;
        let n_features = r.usize()?;
        let scaler = match r.u8()? {
            0 => None,
            1 => {
                let (min, max) = (r.f64s()?, r.f64s()?);
                if min.len() != n_features || max.len() != n_features {
                    return Err(r.err("scaler length does not match feature count"));
                }
                Some(MinMax { min, max })
            }
            other => return Err(r.err(format!("bad scaler flag {other}"))),
        };
        let classifier = match tag {
            1 => {
                let (weights, midpoint) = (r.f64s()?, r.f64s()?);
                if weights.len() != n_features || midpoint.len() != n_features {
                    return Err(r.err("LDA length does not match feature count"));
                }
                Classifier::Lda(Lda { weights, midpoint })
            }
            2 => Classifier::Tree(read_tree(&mut r, n_features)?),
            3 => {
                let n = r.count(1)?;
                if n == 0 {
                    return Err(r.err("forest has no trees"));
                }
                let trees = (0..n).map(|_| read_tree(&mut r, n_features)).collect::<Result<_>>()?;
                Classifier::Forest(RandomForest { trees })
            }
            4 => {
                let gamma = r.finite()?;
                let rho = r.finite()?;
                if !(gamma > 0.0) {
                    return Err(r.err("gamma must be positive"));
                }
                let coefficients = r.f64s()?;
                let mut support_vectors = Vec::with_capacity(coefficients.len());
                for _ in 0..coefficients.len() {
                    support_vectors.push((0..n_features).map(|_| r.finite()).collect::<Result<Vec<_>>>()?);
                }
                Classifier::Svm(Svm { gamma, rho, support_vectors, coefficients })
            }
            other => return Err(r.err(format!("unknown classifier tag {other}"))),
        };
        r.finish()?;
        Ok(Self { n_features, scaler, classifier })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const MODEL_MAGIC: &[u8] = b"EWMODEL\0";
const MODEL_VERSION: u32 = 1;

fn write_tree(w: &mut Writer, t: &DecisionTree) {
    w.usize(t.nodes.len());
    for node in &t.nodes {
        match *node {
            Node::Leaf { positive, negative } => {
                w.u8(0);
                w.usize(positive);
                w.usize(negative);
            }
            Node::Split { feature, threshold, left, right } => {
                w.u8(1);
                w.usize(feature);
                w.f64(threshold);
                w.usize(left);
                w.usize(right);
            }
        }
    }
}

fn read_tree(r: &mut Reader<'_>, n_features: usize) -> Result<DecisionTree> {
    let n = r.count(17)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => Node::Leaf { positive: r.usize()?, negative: r.usize()? },
            1 => Node::Split { feature: r.usize()?, threshold: r.finite()?, left: r.usize()?, right: r.usize()? },
            other => return Err(r.err(format!("bad node tag {other}"))),
        });
    }
    let tree = DecisionTree { nodes };
    tree.validate(n_features).map_err(|e| r.err(e))?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x = (0..20).map(|i| vec![i as f64 / 20.0, ((i * 7) % 5) as f64 / 5.0]).collect();
        let y = (0..20).map(|i| i >= 10).collect();
        (x, y)
    }

    #[test]
    fn models_round_trip_through_bytes() {
        let (x, y) = toy();
        for kind in ClassifierKind::ALL {
            for scale in [false, true] {
                let spec = ClassifierSpec { scale, ..ClassifierSpec::new(kind) };
                let m = train(&spec, &x, &y).unwrap();
                let back = Model::from_bytes(&m.to_bytes()).unwrap();
                assert_eq!(back, m);
                for row in &x {
                    assert_eq!(back.predict(row).unwrap(), m.predict(row).unwrap());
                }
            }
        }
    }

    #[test]
    fn truncated_model_is_rejected() {
        let (x, y) = toy();
        let bytes = train(&ClassifierSpec::new(ClassifierKind::Rf), &x, &y).unwrap().to_bytes();
        for cut in [0, 5, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(Model::from_bytes(&bytes[..cut]).is_err());
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::from_bytes(&extra).is_err());
    }

    #[test]
    fn predict_checks_length() {
        let (x, y) = toy();
        let m = train(&ClassifierSpec::new(ClassifierKind::Lda), &x, &y).unwrap();
        assert!(matches!(m.predict(&[0.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn rf_spec_builds_ten_trees() {
        let (x, y) = toy();
        let m = train(&ClassifierSpec::new(ClassifierKind::Rf), &x, &y).unwrap();
        let Classifier::Forest(f) = &m.classifier else { panic!() };
        assert_eq!(f.trees.len(), 10);
    }

    #[test]
    fn single_class_training_fails() {
        let x = vec![vec![0.0], vec![1.0]];
        for kind in ClassifierKind::ALL {
            assert!(matches!(train(&ClassifierSpec::new(kind), &x, &[true, true]), Err(Error::SingleClass)));
        }
    }

    #[test]
    fn lda_ignores_duplicated_rows() {
        let (x, y) = toy();
        let m = train(&ClassifierSpec::new(ClassifierKind::Lda), &x, &y).unwrap();
        let (x2, y2): (Vec<_>, Vec<_>) = x.iter().cloned().zip(y.iter().copied()).flat_map(|p| [p.clone(), p]).unzip();
        let m2 = train(&ClassifierSpec::new(ClassifierKind::Lda), &x2, &y2).unwrap();
        for i in 0..50 {
            let q = [i as f64 / 49.0, ((i * 3) % 7) as f64 / 7.0];
            assert_eq!(m.predict(&q).unwrap(), m2.predict(&q).unwrap());
        }
    }

    #[test]
    fn kind_parses_names() {
        assert_eq!("SVM".parse::<ClassifierKind>().unwrap(), ClassifierKind::Svm);
        assert!("knn".parse::<ClassifierKind>().is_err());
    }
}
