//! L2-regularized logistic regression trained by full-batch gradient descent.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PonziError;
use crate::chain::{parse_address, Address};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ponzi,
    Normal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ponzi => "ponzi",
            Label::Normal => "normal",
        }
    }

    pub fn target(self) -> f64 {
        match self {
            Label::Ponzi => 1.0,
            Label::Normal => 0.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ponzi" | "1" => Ok(Label::Ponzi),
            "normal" | "0" => Ok(Label::Normal),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledContract {
    pub contract: Address,
    pub label: Label,
}

pub fn labels_csv(labels: &[LabeledContract]) -> String {
    let mut out = String::from("contract_address,label\n");
    for l in labels {
        let _ = writeln!(out, "{},{}", l.contract, l.label);
    }
    out
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<LabeledContract>, PonziError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PonziError::Format { line: i + 1, message };
        let (addr, label) = line.split_once(',').ok_or_else(|| bad("expected contract_address,label".into()))?;
        out.push(LabeledContract {
            contract: parse_address(addr.trim()).map_err(|e| bad(e.to_string()))?,
            label: label.parse().map_err(bad)?,
        });
    }
    Ok(out)
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledContract>, PonziError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PonziError::Io { path: path.to_path_buf(), source: e })?;
    parse_labels_csv(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs: u32,
    /// Only used to shuffle cross-validation folds.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { learning_rate: 0.1, l2_lambda: 1e-3, epochs: 500, seed: 0 }
    }
}

pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub hyperparams: Hyperparams,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Model,
    /// Objective value before each epoch, then after the last.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub label: Label,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-feature mean and population standard deviation; zero spread maps to 1.
pub fn standardization(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = xs.first().map_or(0, Vec::len);
    let n = xs.len() as f64;
    let mut means = vec![0.0; d];
    for x in xs {
        for (m, v) in means.iter_mut().zip(x) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut sds = vec![0.0; d];
    for x in xs {
        for ((s, v), m) in sds.iter_mut().zip(x).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in sds.iter_mut() {
        *s = (*s / n).sqrt();
        if !(*s > 0.0 && s.is_finite()) {
            *s = 1.0;
        }
    }
    (means, sds)
}

fn standardize(x: &[f64], means: &[f64], sds: &[f64]) -> Vec<f64> {
    x.iter().zip(means).zip(sds).map(|((v, m), s)| (v - m) / s).collect()
}

/// L(w,b) = (1/n) Σ [softplus(z) − y·z] + λ‖w‖², z = w·x + b.
pub fn objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let n = xs.len() as f64;
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let z = dot(w, x) + b;
            softplus(z) - y * z
        })
        .sum();
    data / n + lambda * dot(w, w)
}

/// Analytic gradient of [`objective`] as (∂w, ∂b).
pub fn gradient(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = sigmoid(dot(w, x) + b) - y;
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + 2.0 * lambda * wi;
    }
    (gw, gb / n)
}

fn check_inputs(xs: &[Vec<f64>], ys: &[Label]) -> Result<(), PonziError> {
    let d = xs.first().map_or(0, Vec::len);
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(PonziError::DimensionMismatch { expected: d, got: x.len() });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(PonziError::NonFiniteFeature { row: i, column: j });
        }
    }
    let ponzi = ys.iter().filter(|l| **l == Label::Ponzi).count();
    let normal = ys.len() - ponzi;
    if ponzi < 2 || normal < 2 {
        return Err(PonziError::DegenerateLabels { ponzi, normal });
    }
    Ok(())
}

pub fn train(xs: &[Vec<f64>], ys: &[Label], hp: Hyperparams, feature_names: Vec<String>) -> Result<Trained, PonziError> {
    if xs.len() != ys.len() {
        return Err(PonziError::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    check_inputs(xs, ys)?;
    let (means, stddevs) = standardization(xs);
    let zs: Vec<Vec<f64>> = xs.iter().map(|x| standardize(x, &means, &stddevs)).collect();
    let targets: Vec<f64> = ys.iter().map(|l| l.target()).collect();

    let mut w = vec![0.0; means.len()];
    let mut b = 0.0;
    let mut loss_history = Vec::with_capacity(hp.epochs as usize + 1);
    for _ in 0..hp.epochs {
        loss_history.push(objective(&w, b, &zs, &targets, hp.l2_lambda));
        let (gw, gb) = gradient(&w, b, &zs, &targets, hp.l2_lambda);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= hp.learning_rate * g;
        }
        b -= hp.learning_rate * gb;
    }
    loss_history.push(objective(&w, b, &zs, &targets, hp.l2_lambda));
    let names = if feature_names.len() == means.len() {
        feature_names
    } else {
        (0..means.len()).map(|i| format!("f{i}")).collect()
    };
    Ok(Trained { model: Model { weights: w, bias: b, means, stddevs, hyperparams: hp, feature_names: names }, loss_history })
}

pub fn predict(model: &Model, x: &[f64]) -> Result<Prediction, PonziError> {
    if x.len() != model.weights.len() {
        return Err(PonziError::DimensionMismatch { expected: model.weights.len(), got: x.len() });
    }
    let z = standardize(x, &model.means, &model.stddevs);
    let probability = sigmoid(dot(&model.weights, &z) + model.bias);
    let label = if probability >= THRESHOLD { Label::Ponzi } else { Label::Normal };
    Ok(Prediction { probability, label })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Ponzi, Label::Ponzi) => self.tp += 1,
            (Label::Normal, Label::Ponzi) => self.fp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Ponzi, Label::Normal) => self.fn_ += 1,
        }
    }

    pub fn metrics(self) -> Evaluation {
        let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = div(self.tp, self.tp + self.fp);
        let recall = div(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Evaluation { precision, recall, f1, confusion: self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

pub fn evaluate(model: &Model, xs: &[Vec<f64>], ys: &[Label]) -> Result<Evaluation, PonziError> {
    if xs.is_empty() {
        return Err(PonziError::EmptySet);
    }
    let mut c = Confusion::default();
    for (x, y) in xs.iter().zip(ys) {
        c.record(*y, predict(model, x)?.label);
    }
    Ok(c.metrics())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    /// Confusion counts pooled over all held-out folds.
    pub pooled: Evaluation,
    pub per_fold: Vec<Evaluation>,
    /// Loss histories of every fold's training run.
    pub loss_histories: Vec<Vec<f64>>,
}

/// k-fold cross validation over a seeded shuffle of the examples.
pub fn cross_validate(xs: &[Vec<f64>], ys: &[Label], k: usize, hp: Hyperparams) -> Result<CrossValidation, PonziError> {
    if xs.is_empty() {
        return Err(PonziError::EmptySet);
    }
    if k < 2 || k > xs.len() {
        return Err(PonziError::InvalidFolds { k, n: xs.len() });
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(hp.seed));

    let mut pooled = Confusion::default();
    let mut per_fold = Vec::new();
    let mut loss_histories = Vec::new();
    for fold in 0..k {
        let (mut tr_x, mut tr_y, mut te_x, mut te_y) = (vec![], vec![], vec![], vec![]);
        for (pos, &i) in order.iter().enumerate() {
            if pos % k == fold {
                te_x.push(xs[i].clone());
                te_y.push(ys[i]);
            } else {
                tr_x.push(xs[i].clone());
                tr_y.push(ys[i]);
            }
        }
        let trained = train(&tr_x, &tr_y, hp, vec![])?;
        let eval = evaluate(&trained.model, &te_x, &te_y)?;
        pooled.tp += eval.confusion.tp;
        pooled.fp += eval.confusion.fp;
        pooled.tn += eval.confusion.tn;
        pooled.fn_ += eval.confusion.fn_;
        per_fold.push(eval);
        loss_histories.push(trained.loss_history);
    }
    Ok(CrossValidation { pooled: pooled.metrics(), per_fold, loss_histories })
}

const MODEL_FORMAT: &str = "etherscope-logreg";
const MODEL_VERSION: u32 = 1;

impl Model {
    /// Plain text: `key=value` header lines, then one
    /// `feature=<name> <mean> <stddev> <weight>` line per dimension.
    pub fn to_text(&self) -> String {
        let hp = &self.hyperparams;
        let mut out = String::new();
        let _ = writeln!(out, "format={MODEL_FORMAT}");
        let _ = writeln!(out, "version={MODEL_VERSION}");
        let _ = writeln!(out, "learning_rate={}", hp.learning_rate);
        let _ = writeln!(out, "l2_lambda={}", hp.l2_lambda);
        let _ = writeln!(out, "epochs={}", hp.epochs);
        let _ = writeln!(out, "seed={}", hp.seed);
        let _ = writeln!(out, "threshold={THRESHOLD}");
        let _ = writeln!(out, "dim={}", self.weights.len());
        let _ = writeln!(out, "bias={}", self.bias);
        for i in 0..self.weights.len() {
            let _ = writeln!(out, "feature={} {} {} {}", self.feature_names[i], self.means[i], self.stddevs[i], self.weights[i]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Model, PonziError> {
        let mut keys: BTreeMap<&str, &str> = BTreeMap::new();
        let mut features = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| PonziError::Format { line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
            if k == "feature" {
                let parts: Vec<&str> = v.split(' ').collect();
                let [name, mean, sd, w] = parts[..] else {
                    return Err(bad("feature line needs name mean stddev weight".into()));
                };
                let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
                features.push((name.to_string(), num(mean)?, num(sd)?, num(w)?));
            } else {
                keys.insert(k, v);
            }
        }
        let get = |k: &str| keys.get(k).copied().ok_or_else(|| PonziError::Format { line: 0, message: format!("missing key {k}") });
        let real = |k: &str| {
            get(k)?.parse::<f64>().map_err(|e| PonziError::Format { line: 0, message: format!("{k}: {e}") })
        };
        if get("format")? != MODEL_FORMAT {
            return Err(PonziError::Format { line: 1, message: "not an etherscope model file".into() });
        }
        if get("version")? != MODEL_VERSION.to_string() {
            return Err(PonziError::Format { line: 2, message: format!("unsupported model version {}", get("version")?) });
        }
        let int = |k: &str| {
            get(k)?.parse::<u64>().map_err(|e| PonziError::Format { line: 0, message: format!("{k}: {e}") })
        };
        let dim = int("dim")? as usize;
        if features.len() != dim {
            return Err(PonziError::Format { line: 0, message: format!("dim={dim} but {} feature lines", features.len()) });
        }
        let hyperparams = Hyperparams {
            learning_rate: real("learning_rate")?,
            l2_lambda: real("l2_lambda")?,
            epochs: int("epochs")? as u32,
            seed: int("seed")?,
        };
        Ok(Model {
            bias: real("bias")?,
            feature_names: features.iter().map(|f| f.0.clone()).collect(),
            means: features.iter().map(|f| f.1).collect(),
            stddevs: features.iter().map(|f| f.2).collect(),
            weights: features.iter().map(|f| f.3).collect(),
            hyperparams,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PonziError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| PonziError::Io { path: path.to_path_buf(), source: e })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, PonziError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PonziError::Io { path: path.to_path_buf(), source: e })?;
        Model::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable() -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut xs = vec![];
        let mut ys = vec![];
        for i in 0..20 {
            let t = i as f64;
            xs.push(vec![t, 3.0 - t * 0.5]);
            ys.push(if i >= 10 { Label::Ponzi } else { Label::Normal });
        }
        (xs, ys)
    }

    #[test]
    fn separable_toy_set() {
        let (xs, ys) = separable();
        let t = train(&xs, &ys, Hyperparams::default(), vec![]).unwrap();
        let e = evaluate(&t.model, &xs, &ys).unwrap();
        assert_eq!(e.f1, 1.0);
        assert!(t.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn no_signal_predicts_half() {
        let xs = vec![vec![1.0, 2.0]; 6];
        let ys = [Label::Ponzi, Label::Normal, Label::Ponzi, Label::Normal, Label::Ponzi, Label::Normal];
        let t = train(&xs, &ys, Hyperparams::default(), vec![]).unwrap();
        for x in [[1.0, 2.0], [50.0, -3.0]] {
            assert!((predict(&t.model, &x).unwrap().probability - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_model_is_half() {
        let m = Model {
            weights: vec![0.0; 3],
            bias: 0.0,
            means: vec![0.0; 3],
            stddevs: vec![1.0; 3],
            hyperparams: Hyperparams::default(),
            feature_names: vec!["a".into(), "b".into(), "c".into()],
        };
        assert_eq!(predict(&m, &[4.0, 5.0, 6.0]).unwrap().probability, 0.5);
        assert!(matches!(predict(&m, &[1.0]), Err(PonziError::DimensionMismatch { .. })));
    }

    #[test]
    fn errors() {
        let xs = vec![vec![1.0]; 4];
        assert!(matches!(
            train(&xs, &[Label::Ponzi; 4], Hyperparams::default(), vec![]),
            Err(PonziError::DegenerateLabels { .. })
        ));
        let mut bad = xs.clone();
        bad[2][0] = f64::NAN;
        let ys = [Label::Ponzi, Label::Ponzi, Label::Normal, Label::Normal];
        assert!(matches!(train(&bad, &ys, Hyperparams::default(), vec![]), Err(PonziError::NonFiniteFeature { row: 2, column: 0 })));
        let m = train(&xs, &ys, Hyperparams::default(), vec![]).unwrap().model;
        assert!(matches!(evaluate(&m, &[], &[]), Err(PonziError::EmptySet)));
    }

    #[test]
    fn metrics_edge_cases() {
        let mut c = Confusion::default();
        c.record(Label::Ponzi, Label::Normal);
        c.record(Label::Normal, Label::Normal);
        let e = c.metrics();
        assert_eq!((e.recall, e.f1), (0.0, 0.0));
    }

    #[test]
    fn monotone_in_positive_weight_feature() {
        let (xs, ys) = separable();
        let m = train(&xs, &ys, Hyperparams::default(), vec![]).unwrap().model;
        assert!(m.weights[0] > 0.0);
        let mut prev = 0.0;
        for i in -10..30 {
            let p = predict(&m, &[i as f64, 0.0]).unwrap().probability;
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = 0.3;
        let lambda = 1e-3;
        let (gw, gb) = gradient(&w, b, &xs, &ys, lambda);
        let h = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for j in 0..4 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let num = (objective(&wp, b, &xs, &ys, lambda) - objective(&wm, b, &xs, &ys, lambda)) / (2.0 * h);
            assert!(rel(gw[j], num) <= 1e-6, "w{j}: {} vs {num}", gw[j]);
        }
        let num = (objective(&w, b + h, &xs, &ys, lambda) - objective(&w, b - h, &xs, &ys, lambda)) / (2.0 * h);
        assert!(rel(gb, num) <= 1e-6);
    }

    #[test]
    fn model_text_roundtrip() {
        let (xs, ys) = separable();
        let m = train(&xs, &ys, Hyperparams::default(), vec!["x".into(), "y".into()]).unwrap().model;
        assert_eq!(Model::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn labels_roundtrip() {
        let labels = vec![
            LabeledContract { contract: Address([1; 20]), label: Label::Ponzi },
            LabeledContract { contract: Address([2; 20]), label: Label::Normal },
        ];
        assert_eq!(parse_labels_csv(&labels_csv(&labels)).unwrap(), labels);
    }
}
