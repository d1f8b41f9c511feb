//! L2-regularized multinomial logistic regression and one-vs-rest linear SVM,
//! both trained by deterministic full-batch descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-oriented feature matrix, dense or sparse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMatrix {
    Dense {
        cols: usize,
        data: Vec<f64>,
    },
    Sparse {
        cols: usize,
        /// Per row, `(column, value)` pairs with distinct columns.
        rows: Vec<Vec<(usize, f64)>>,
    },
}

impl FeatureMatrix {
    pub fn dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(format!("rows of {cols}"), format!("row of {}", bad.len())));
        }
        Ok(FeatureMatrix::Dense {
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn sparse(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &rows {
            if let Some(&(c, _)) = row.iter().find(|(c, _)| *c >= cols) {
                return Err(Error::shape(format!("columns below {cols}"), c));
            }
        }
        Ok(FeatureMatrix::Sparse { cols, rows })
    }

    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::Dense { cols, data } => {
                if *cols == 0 {
                    0
                } else {
                    data.len() / cols
                }
            }
            FeatureMatrix::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            FeatureMatrix::Dense { cols, .. } | FeatureMatrix::Sparse { cols, .. } => *cols,
        }
    }

    /// `w · x_r`.
    pub fn row_dot(&self, r: usize, w: &[f64]) -> f64 {
        match self {
            FeatureMatrix::Dense { cols, data } => data[r * cols..(r + 1) * cols]
                .iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .sum(),
            FeatureMatrix::Sparse { rows, .. } => rows[r].iter().map(|&(c, v)| v * w[c]).sum(),
        }
    }

    /// `out += alpha · x_r`.
    pub fn add_row(&self, r: usize, alpha: f64, out: &mut [f64]) {
        match self {
            FeatureMatrix::Dense { cols, data } => {
                for (o, x) in out.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
                    *o += alpha * x;
                }
            }
            FeatureMatrix::Sparse { rows, .. } => {
                for &(c, v) in &rows[r] {
                    out[c] += alpha * v;
                }
            }
        }
    }

    /// Copies of the selected rows, in order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        match self {
            FeatureMatrix::Dense { cols, data } => FeatureMatrix::Dense {
                cols: *cols,
                data: indices
                    .iter()
                    .flat_map(|&r| data[r * cols..(r + 1) * cols].iter().copied())
                    .collect(),
            },
            FeatureMatrix::Sparse { cols, rows } => FeatureMatrix::Sparse {
                cols: *cols,
                rows: indices.iter().map(|&r| rows[r].clone()).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Logistic,
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `C × d`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub num_features: usize,
    pub lambda: f64,
    pub loss: LossKind,
}

impl LinearModel {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn class_weights(&self, c: usize) -> &[f64] {
        &self.weights[c * self.num_features..(c + 1) * self.num_features]
    }

    pub fn scores(&self, x: &FeatureMatrix, r: usize) -> Vec<f64> {
        (0..self.num_classes())
            .map(|c| x.row_dot(r, self.class_weights(c)) + self.bias[c])
            .collect()
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict_linear(model: &LinearModel, features: &FeatureMatrix) -> Result<Vec<usize>> {
    if features.cols() != model.num_features {
        return Err(Error::shape(
            format!("{} features", model.num_features),
            format!("{} features", features.cols()),
        ));
    }
    Ok((0..features.rows()).map(|r| argmax(&model.scores(features, r))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub max_iterations: usize,
    pub initial_step: f64,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            max_iterations: 500,
            initial_step: 1.0,
            tolerance: 1e-4,
        }
    }
}

/// A trained model with its optimization history.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub model: LinearModel,
    /// Objective after each accepted iterate, starting from the initial point.
    pub objective: Vec<f64>,
    pub gradient_norm: f64,
}

fn check_inputs(features: &FeatureMatrix, labels: &[usize], num_classes: usize, lambda: f64) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::invalid("no training examples"));
    }
    if features.rows() != labels.len() {
        return Err(Error::shape(format!("{} labels", features.rows()), labels.len()));
    }
    if num_classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::invalid(format!("label {l} outside {num_classes} classes")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(())
}

/// Constant model for single-class training data.
fn single_class(labels: &[usize], num_classes: usize, d: usize, lambda: f64, loss: LossKind) -> Option<LinearFit> {
    let first = labels[0];
    if labels.iter().any(|&l| l != first) {
        return None;
    }
    log::warn!("training data contains only class {first}; the model predicts it everywhere");
    let mut bias = vec![0.0; num_classes];
    bias[first] = 1.0;
    Some(LinearFit {
        model: LinearModel {
            weights: vec![0.0; num_classes * d],
            bias,
            num_features: d,
            lambda,
            loss,
        },
        objective: Vec::new(),
        gradient_norm: 0.0,
    })
}

/// Mean softmax cross-entropy plus `(λ/2)‖W‖²` (bias unregularized), and
/// optionally its gradient.
fn logreg_objective(
    model: &LinearModel,
    x: &FeatureMatrix,
    labels: &[usize],
    grad: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let n = labels.len() as f64;
    let c_count = model.num_classes();
    let mut loss = 0.0;
    let mut grad = grad;
    if let Some((gw, gb)) = grad.as_mut() {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gb.iter_mut().for_each(|g| *g = 0.0);
    }
    for (r, &y) in labels.iter().enumerate() {
        let s = model.scores(x, r);
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s.iter().map(|v| (v - max).exp()).sum();
        loss += max + z.ln() - s[y];
        if let Some((gw, gb)) = grad.as_mut() {
            for c in 0..c_count {
                let p = (s[c] - max).exp() / z - f64::from(c == y);
                if p != 0.0 {
                    gb[c] += p / n;
                    let d = model.num_features;
                    x.add_row(r, p / n, &mut gw[c * d..(c + 1) * d]);
                }
            }
        }
    }
    let reg: f64 = model.weights.iter().map(|w| w * w).sum();
    if let Some((gw, _)) = grad {
        for (g, w) in gw.iter_mut().zip(&model.weights) {
            *g += model.lambda * w;
        }
    }
    loss / n + 0.5 * model.lambda * reg
}

/// Full-batch gradient descent from zero weights. A step is accepted only if
/// it lowers the objective (then the step grows by 1.2); otherwise the step
/// is halved and retried, so the accepted objective sequence is monotone.
pub fn train_logreg(
    features: &FeatureMatrix,
    labels: &[usize],
    num_classes: usize,
    lambda: f64,
    config: &LinearConfig,
) -> Result<LinearFit> {
    check_inputs(features, labels, num_classes, lambda)?;
    let d = features.cols();
    if let Some(fit) = single_class(labels, num_classes, d, lambda, LossKind::Logistic) {
        return Ok(fit);
    }
    let mut model = LinearModel {
        weights: vec![0.0; num_classes * d],
        bias: vec![0.0; num_classes],
        num_features: d,
        lambda,
        loss: LossKind::Logistic,
    };
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = vec![0.0; num_classes];
    let mut current = logreg_objective(&model, features, labels, Some((&mut gw, &mut gb)));
    let mut history = vec![current];
    let mut step = config.initial_step;
    let norm = |gw: &[f64], gb: &[f64]| gw.iter().chain(gb).map(|g| g * g).sum::<f64>().sqrt();
    let mut gnorm = norm(&gw, &gb);
    for _ in 0..config.max_iterations {
        if gnorm < config.tolerance {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = model.clone();
            for (w, g) in trial.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in trial.bias.iter_mut().zip(&gb) {
                *b -= step * g;
            }
            let value = logreg_objective(&trial, features, labels, None);
            if value < current {
                model = trial;
                current = value;
                step *= 1.2;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            log::debug!("logistic regression stalled at objective {current}");
            break;
        }
        let value = logreg_objective(&model, features, labels, Some((&mut gw, &mut gb)));
        debug_assert_eq!(value, current);
        history.push(current);
        gnorm = norm(&gw, &gb);
    }
    Ok(LinearFit {
        model,
        objective: history,
        gradient_norm: gnorm,
    })
}

/// One-vs-rest objective for class `c`: mean hinge plus `(λ/2)‖w‖²`.
fn hinge_objective(w: &[f64], b: f64, x: &FeatureMatrix, targets: &[f64], lambda: f64) -> f64 {
    let n = targets.len() as f64;
    let loss: f64 = targets
        .iter()
        .enumerate()
        .map(|(r, &y)| (1.0 - y * (x.row_dot(r, w) + b)).max(0.0))
        .sum();
    loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// One-vs-rest linear SVM trained by full-batch subgradient descent with
/// step `η₀/√t`, keeping the best iterate per class.
pub fn train_svm(
    features: &FeatureMatrix,
    labels: &[usize],
    num_classes: usize,
    lambda: f64,
    config: &LinearConfig,
) -> Result<LinearFit> {
    check_inputs(features, labels, num_classes, lambda)?;
    let d = features.cols();
    if let Some(fit) = single_class(labels, num_classes, d, lambda, LossKind::Hinge) {
        return Ok(fit);
    }
    let n = labels.len() as f64;
    let mut weights = vec![0.0; num_classes * d];
    let mut bias = vec![0.0; num_classes];
    let mut total_history = vec![0.0; config.max_iterations + 1];
    let mut gnorm_total = 0.0;
    for c in 0..num_classes {
        let targets: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut best = (hinge_objective(&w, b, features, &targets, lambda), w.clone(), b);
        total_history[0] += best.0;
        let mut gw = vec![0.0; d];
        for t in 1..=config.max_iterations {
            gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = lambda * wi);
            let mut gb = 0.0;
            for (r, &y) in targets.iter().enumerate() {
                if y * (features.row_dot(r, &w) + b) < 1.0 {
                    features.add_row(r, -y / n, &mut gw);
                    gb -= y / n;
                }
            }
            let step = config.initial_step / (t as f64).sqrt();
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= step * g;
            }
            b -= step * gb;
            let value = hinge_objective(&w, b, features, &targets, lambda);
            if value < best.0 {
                best = (value, w.clone(), b);
            }
            total_history[t] += best.0;
            if t == config.max_iterations {
                gnorm_total += gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
            }
        }
        weights[c * d..(c + 1) * d].copy_from_slice(&best.1);
        bias[c] = best.2;
    }
    Ok(LinearFit {
        model: LinearModel {
            weights,
            bias,
            num_features: d,
            lambda,
            loss: LossKind::Hinge,
        },
        objective: total_history,
        gradient_norm: gnorm_total.sqrt(),
    })
}

/// Regularization grid searched on the development split.
pub const LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Trains one model per `λ` and keeps the one with the best development
/// accuracy; ties prefer the larger `λ`.
pub fn select_lambda(
    train: (&FeatureMatrix, &[usize]),
    dev: (&FeatureMatrix, &[usize]),
    num_classes: usize,
    loss: LossKind,
    grid: &[f64],
    config: &LinearConfig,
) -> Result<(LinearModel, f64)> {
    let mut best: Option<(LinearModel, f64)> = None;
    for &lambda in grid.iter().rev() {
        let fit = match loss {
            LossKind::Logistic => train_logreg(train.0, train.1, num_classes, lambda, config)?,
            LossKind::Hinge => train_svm(train.0, train.1, num_classes, lambda, config)?,
        };
        let predicted = predict_linear(&fit.model, dev.0)?;
        let correct = predicted.iter().zip(dev.1).filter(|(a, b)| a == b).count();
        let acc = correct as f64 / dev.1.len().max(1) as f64;
        log::debug!("lambda {lambda}: dev accuracy {acc:.4}");
        if best.as_ref().is_none_or(|(_, a)| acc > *a) {
            best = Some((fit.model, acc));
        }
    }
    best.ok_or_else(|| Error::invalid("empty lambda grid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> (FeatureMatrix, Vec<usize>) {
        (
            FeatureMatrix::dense(vec![vec![1.0, 0.5], vec![-1.0, -0.2]]).unwrap(),
            vec![1, 0],
        )
    }

    fn accuracy(model: &LinearModel, x: &FeatureMatrix, y: &[usize]) -> f64 {
        let p = predict_linear(model, x).unwrap();
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(&[0.2, 0.9]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2 + 7.0, 0.9 + 7.0]), 1);
    }

    #[test]
    fn separable_points() {
        let (x, y) = two_points();
        let fit = train_logreg(&x, &y, 2, 1e-6, &LinearConfig::default()).unwrap();
        assert_eq!(accuracy(&fit.model, &x, &y), 1.0);
        assert!(fit.objective.windows(2).all(|w| w[1] <= w[0]));
        let fit = train_svm(&x, &y, 2, 1e-6, &LinearConfig::default()).unwrap();
        assert_eq!(accuracy(&fit.model, &x, &y), 1.0);
    }

    #[test]
    fn logreg_converges_with_regularization() {
        let (x, y) = two_points();
        let fit = train_logreg(&x, &y, 2, 0.1, &LinearConfig { max_iterations: 5000, tolerance: 1e-6, ..Default::default() }).unwrap();
        assert!(fit.gradient_norm < 1e-3);
    }

    #[test]
    fn huge_lambda_gives_prior() {
        let x = FeatureMatrix::dense(vec![vec![1.0], vec![2.0], vec![-1.0], vec![0.5]]).unwrap();
        let y = vec![1, 1, 1, 0];
        let fit = train_logreg(&x, &y, 2, 1e6, &LinearConfig::default()).unwrap();
        assert!(fit.model.weights.iter().all(|w| w.abs() < 1e-5));
        assert_eq!(predict_linear(&fit.model, &x).unwrap(), vec![1; 4]);
    }

    #[test]
    fn duplicated_data_same_model() {
        let (x, y) = two_points();
        let cfg = LinearConfig::default();
        let once = train_logreg(&x, &y, 2, 0.01, &cfg).unwrap().model;
        let x2 = x.select(&[0, 1, 0, 1]);
        let twice = train_logreg(&x2, &[1, 0, 1, 0], 2, 0.01, &cfg).unwrap().model;
        for (a, b) in once.weights.iter().zip(&twice.weights) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn two_class_svm_is_antisymmetric() {
        let x = FeatureMatrix::dense(vec![vec![1.0, 2.0], vec![-0.5, 0.3], vec![0.2, -1.0]]).unwrap();
        let fit = train_svm(&x, &[1, 0, 0], 2, 0.01, &LinearConfig::default()).unwrap();
        let m = &fit.model;
        for (a, b) in m.class_weights(0).iter().zip(m.class_weights(1)) {
            assert_eq!(*a, -*b);
        }
        for r in 0..3 {
            let s1 = m.scores(&x, r)[1];
            assert_eq!(predict_linear(m, &x).unwrap()[r], usize::from(s1 > 0.0));
        }
    }

    #[test]
    fn single_class_and_bad_inputs() {
        let x = FeatureMatrix::dense(vec![vec![1.0], vec![2.0]]).unwrap();
        let fit = train_logreg(&x, &[1, 1], 3, 0.1, &LinearConfig::default()).unwrap();
        assert_eq!(predict_linear(&fit.model, &x).unwrap(), vec![1, 1]);
        assert!(train_logreg(&x, &[0, 3], 3, 0.1, &LinearConfig::default()).is_err());
        assert!(train_svm(&x, &[0], 2, 0.1, &LinearConfig::default()).is_err());
        let wrong = FeatureMatrix::dense(vec![vec![1.0, 2.0]]).unwrap();
        assert!(predict_linear(&fit.model, &wrong).is_err());
    }

    #[test]
    fn sparse_and_dense_agree() {
        let dense = FeatureMatrix::dense(vec![vec![2.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let sparse = FeatureMatrix::sparse(
            3,
            vec![vec![(0, 2.0), (2, 1.0)], vec![(1, 1.0)], vec![(0, 1.0), (1, 1.0)]],
        )
        .unwrap();
        let y = [0, 1, 2];
        let a = train_logreg(&dense, &y, 3, 0.01, &LinearConfig::default()).unwrap();
        let b = train_logreg(&sparse, &y, 3, 0.01, &LinearConfig::default()).unwrap();
        assert_eq!(a.model, b.model);
    }
}
