//! Victim learners: the batch hinge-loss SVM trainer and the sequential
//! gradient-descent learner. Both are plants whose state is a linear model.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, dot, sign, Norm};

/// Linear classifier `sign(w·x + bias)` with `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights, bias: 0.0 }
    }

    pub fn with_bias(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> i8 {
        sign(self.score(x)) as i8
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| *w == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Weights followed by the bias, the parameter vector of the augmented
    /// problem with a constant-1 feature.
    pub(crate) fn params(&self, fit_bias: bool) -> Vec<f64> {
        let mut p = self.weights.clone();
        if fit_bias {
            p.push(self.bias);
        }
        p
    }

    pub(crate) fn from_params(mut params: Vec<f64>, fit_bias: bool, bias: f64) -> Self {
        if fit_bias {
            let b = params.pop().expect("bias slot");
            Self::with_bias(params, b)
        } else {
            Self::with_bias(params, bias)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: i8,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: i8) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::invalid(format!("label must be -1 or +1, got {label}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Self { features, label })
    }

    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

/// Ordered training set with a uniform feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self> {
        let Some(first) = examples.first() else {
            return Err(Error::invalid(
                "cannot infer the dimension of an empty dataset; use Dataset::empty",
            ));
        };
        let dim = first.features.len();
        for e in &examples {
            check_dim(dim, e.features.len())?;
        }
        Ok(Self { dim, examples })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            examples: Vec::new(),
        }
    }

    /// Convenience constructor from `(features, label)` pairs.
    pub fn from_pairs(pairs: &[(&[f64], i8)]) -> Result<Self> {
        let ex = pairs
            .iter()
            .map(|(x, y)| LabeledExample::new(x.to_vec(), *y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ex)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    pub fn push(&mut self, example: LabeledExample) -> Result<()> {
        check_dim(self.dim, example.features.len())?;
        self.examples.push(example);
        Ok(())
    }

    pub fn error_rate(&self, model: &LinearModel) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let wrong = self.iter().filter(|e| model.predict(&e.features) != e.label).count();
        wrong as f64 / self.len() as f64
    }

    /// Plain-text rows `y,x_1,...,x_d`; lines starting with `#` are skipped.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "# y");
        for j in 1..=self.dim {
            let _ = write!(out, ",x_{j}");
        }
        out.push('\n');
        for e in &self.examples {
            let _ = write!(out, "{}", e.label);
            for x in &e.features {
                let _ = write!(out, ",{}", crate::harness::fmt_real(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::invalid(format!("{}: {e}", path.as_ref().display())))?;
        text.parse()
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut examples = Vec::new();
        let mut dim = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let mut fields = line.split(',').map(str::trim);
            let y: i8 = fields
                .next()
                .unwrap_or_default()
                .trim_start_matches('+')
                .parse()
                .map_err(|_| err(format!("bad label in `{line}`")))?;
            let x = fields
                .map(|f| f.parse::<f64>().map_err(|_| err(format!("bad feature `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            if *dim.get_or_insert(x.len()) != x.len() {
                return Err(err(format!("expected {} features, got {}", dim.unwrap_or(0), x.len())));
            }
            examples.push(LabeledExample::new(x, y).map_err(|e| err(e.to_string()))?);
        }
        match dim {
            Some(_) => Dataset::new(examples),
            None => Err(Error::Parse {
                line: 0,
                message: "dataset has no rows".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loss {
    #[default]
    Hinge,
    Logistic,
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hinge" => Ok(Loss::Hinge),
            "logistic" => Ok(Loss::Logistic),
            other => Err(Error::invalid(format!("unknown loss `{other}` (hinge | logistic)"))),
        }
    }
}

/// Learning-rate schedule η_t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    /// η_t = η_0 / (t + 1).
    InverseTime(f64),
}

impl LearningRate {
    pub fn at(self, step: usize) -> f64 {
        match self {
            LearningRate::Constant(eta) => eta,
            LearningRate::InverseTime(eta) => eta / (step as f64 + 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Regularizer weight λ on ‖w‖².
    pub lambda: f64,
    pub rate: LearningRate,
    pub loss: Loss,
    /// Learn a bias through an appended constant-1 feature (regularized like
    /// the weights). Off by default.
    pub fit_bias: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            rate: LearningRate::Constant(0.1),
            loss: Loss::Hinge,
            fit_bias: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        let eta = match self.rate {
            LearningRate::Constant(e) | LearningRate::InverseTime(e) => e,
        };
        // η = 0 is accepted: it models a learner the adversary cannot move.
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be >= 0, got {eta}")));
        }
        Ok(())
    }

    /// One online update w_{t+1} = w_t − η_t (∇ℓ(w_t, x_t, y_t) + 2λ w_t).
    pub fn step(&self, model: &LinearModel, item: &LabeledExample, step: usize) -> Result<LinearModel> {
        check_dim(model.dim(), item.features.len())?;
        let eta = self.rate.at(step);
        if eta < 0.0 {
            return Err(Error::invalid("learning rate must be >= 0"));
        }
        let theta = model.params(self.fit_bias);
        let x = augment(&item.features, self.fit_bias);
        let g = param_gradient(self.loss, &theta, &x, item.y(), self.lambda);
        let next: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect();
        Ok(LinearModel::from_params(next, self.fit_bias, model.bias))
    }

    /// Partial derivatives of one update with respect to the parameters and to
    /// the item's features: `(∂θ'/∂θ, ∂θ'/∂x)`, row-major.
    pub(crate) fn step_jacobians(
        &self,
        model: &LinearModel,
        item: &LabeledExample,
        step: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let eta = self.rate.at(step);
        let theta = model.params(self.fit_bias);
        let x = augment(&item.features, self.fit_bias);
        let y = item.y();
        let p = theta.len();
        let d = item.features.len();
        let mut j_theta = vec![vec![0.0; p]; p];
        let mut j_x = vec![vec![0.0; d]; p];
        for (i, row) in j_theta.iter_mut().enumerate() {
            row[i] = 1.0 - 2.0 * eta * self.lambda;
        }
        let margin = y * dot(&theta, &x);
        match self.loss {
            Loss::Hinge => {
                if margin < 1.0 {
                    for (k, row) in j_x.iter_mut().enumerate().take(d) {
                        row[k] = eta * y;
                    }
                }
            }
            Loss::Logistic => {
                let s = sigmoid(-margin);
                let ds = s * (1.0 - s);
                for i in 0..p {
                    for j in 0..p {
                        j_theta[i][j] -= eta * ds * x[i] * x[j];
                    }
                    for k in 0..d {
                        let mut v = ds * theta[k] * x[i];
                        if i == k {
                            v -= y * s;
                        }
                        j_x[i][k] = -eta * v;
                    }
                }
            }
        }
        (j_theta, j_x)
    }
}

pub(crate) fn augment(x: &[f64], fit_bias: bool) -> Vec<f64> {
    let mut v = x.to_vec();
    if fit_bias {
        v.push(1.0);
    }
    v
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-item loss ℓ(θ, x, y).
pub fn loss_value(loss: Loss, theta: &[f64], x: &[f64], y: f64) -> f64 {
    let m = y * dot(theta, x);
    match loss {
        Loss::Hinge => (1.0 - m).max(0.0),
        Loss::Logistic => {
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        }
    }
}

/// ∇ℓ(θ, x, y) + 2λθ. The hinge kink y·θ·x = 1 takes the zero branch.
pub fn param_gradient(loss: Loss, theta: &[f64], x: &[f64], y: f64, lambda: f64) -> Vec<f64> {
    let m = y * dot(theta, x);
    let coef = match loss {
        Loss::Hinge => {
            if m < 1.0 {
                -y
            } else {
                0.0
            }
        }
        Loss::Logistic => -y * sigmoid(-m),
    };
    theta
        .iter()
        .zip(x)
        .map(|(t, xi)| coef * xi + 2.0 * lambda * t)
        .collect()
}

/// One hinge-loss gradient step w − η (∇ℓ(w, x, y) + 2λw), no bias.
pub fn sgd_step(model: &LinearModel, item: &LabeledExample, eta: f64, lambda: f64) -> Result<LinearModel> {
    if !(eta >= 0.0) {
        return Err(Error::invalid(format!("step size must be >= 0, got {eta}")));
    }
    let config = LearnerConfig {
        lambda,
        rate: LearningRate::Constant(eta),
        loss: Loss::Hinge,
        fit_bias: false,
    };
    config.step(model, item, 0)
}

/// Σ ℓ(w, x_i, y_i) + λ‖w‖² over the (possibly bias-augmented) parameters.
pub fn training_objective(data: &Dataset, model: &LinearModel, config: &LearnerConfig) -> f64 {
    let theta = model.params(config.fit_bias);
    let risk: f64 = data
        .iter()
        .map(|e| loss_value(config.loss, &theta, &augment(&e.features, config.fit_bias), e.y()))
        .sum();
    risk + config.lambda * dot(&theta, &theta)
}

/// Batch empirical-risk minimization with hinge loss and λ‖w‖², from w = 0.
pub fn batch_svm_train(data: &Dataset, lambda: f64) -> Result<LinearModel> {
    train_batch(
        data,
        &LearnerConfig {
            lambda,
            ..LearnerConfig::default()
        },
    )
}

const BATCH_ITER_CAP: usize = 10_000;

/// Deterministic batch trainer for any learner configuration.
///
/// Hinge loss with λ > 0 is solved by dual coordinate descent to a projected
/// gradient below 1e-12, which makes the learned model a piecewise-smooth
/// function of the data. λ = 0 falls back to subgradient descent with a
/// 1/(k+1) schedule. Logistic loss uses gradient descent with backtracking.
pub fn train_batch(data: &Dataset, config: &LearnerConfig) -> Result<LinearModel> {
    config.validate()?;
    if data.dim() == 0 {
        return Err(Error::invalid("dataset has zero feature dimension"));
    }
    let p = data.dim() + usize::from(config.fit_bias);
    let xs: Vec<Vec<f64>> = data.iter().map(|e| augment(&e.features, config.fit_bias)).collect();
    let ys: Vec<f64> = data.iter().map(LabeledExample::y).collect();
    let theta = match config.loss {
        Loss::Hinge if config.lambda > 0.0 => hinge_dual_cd(&xs, &ys, config.lambda, p),
        Loss::Hinge => subgradient_descent(&xs, &ys, p),
        Loss::Logistic => logistic_descent(&xs, &ys, config.lambda, p),
    };
    Ok(LinearModel::from_params(theta, config.fit_bias, 0.0))
}

fn hinge_dual_cd(xs: &[Vec<f64>], ys: &[f64], lambda: f64, p: usize) -> Vec<f64> {
    // min λ‖w‖² + Σ hinge  ⇔  min ½‖w‖² + C Σ hinge with C = 1/(2λ).
    let c = 1.0 / (2.0 * lambda);
    let n = xs.len();
    let q: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; p];
    for epoch in 0..BATCH_ITER_CAP * 10 {
        let mut max_pg = f64::NEG_INFINITY;
        let mut min_pg = f64::INFINITY;
        for i in 0..n {
            if q[i] == 0.0 {
                continue;
            }
            let g = ys[i] * dot(&w, &xs[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg);
            min_pg = min_pg.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * ys[i];
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += delta * xj;
                }
            }
        }
        if n == 0 || (max_pg <= 1e-12 && min_pg >= -1e-12) {
            break;
        }
        // Rebuild w from α now and then so rounding drift cannot accumulate.
        if epoch % 64 == 63 {
            w = weights_from_dual(xs, ys, &alpha, p);
        }
    }
    weights_from_dual(xs, ys, &alpha, p)
}

fn weights_from_dual(xs: &[Vec<f64>], ys: &[f64], alpha: &[f64], p: usize) -> Vec<f64> {
    let mut w = vec![0.0; p];
    for ((x, y), a) in xs.iter().zip(ys).zip(alpha) {
        if *a != 0.0 {
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj += a * y * xj;
            }
        }
    }
    w
}

fn risk(loss: Loss, xs: &[Vec<f64>], ys: &[f64], lambda: f64, theta: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| loss_value(loss, theta, x, *y))
        .sum::<f64>()
        + lambda * dot(theta, theta)
}

fn full_gradient(loss: Loss, xs: &[Vec<f64>], ys: &[f64], lambda: f64, theta: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * lambda * t).collect();
    for (x, y) in xs.iter().zip(ys) {
        let gi = param_gradient(loss, theta, x, *y, 0.0);
        for (a, b) in g.iter_mut().zip(gi) {
            *a += b;
        }
    }
    g
}

fn subgradient_descent(xs: &[Vec<f64>], ys: &[f64], p: usize) -> Vec<f64> {
    let mut theta = vec![0.0; p];
    let mut best = theta.clone();
    let mut best_obj = risk(Loss::Hinge, xs, ys, 0.0, &theta);
    let mut prev = best_obj;
    for k in 0..BATCH_ITER_CAP {
        let g = full_gradient(Loss::Hinge, xs, ys, 0.0, &theta);
        let step = 1.0 / (k as f64 + 1.0);
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= step * gi;
        }
        let obj = risk(Loss::Hinge, xs, ys, 0.0, &theta);
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&theta);
        }
        if (prev - obj).abs() < 1e-9 {
            break;
        }
        prev = obj;
    }
    best
}

fn logistic_descent(xs: &[Vec<f64>], ys: &[f64], lambda: f64, p: usize) -> Vec<f64> {
    let mut theta = vec![0.0; p];
    let mut obj = risk(Loss::Logistic, xs, ys, lambda, &theta);
    let mut step = 1.0;
    for _ in 0..BATCH_ITER_CAP {
        let g = full_gradient(Loss::Logistic, xs, ys, lambda, &theta);
        let gg = dot(&g, &g);
        if Norm::LInf.eval(&g) < 1e-10 {
            break;
        }
        step *= 2.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let trial_obj = risk(Loss::Logistic, xs, ys, lambda, &trial);
            if trial_obj <= obj - 0.5 * step * gg {
                theta = trial;
                obj = trial_obj;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return theta;
            }
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(x: &[f64], y: i8) -> LabeledExample {
        LabeledExample::new(x.to_vec(), y).unwrap()
    }

    #[test]
    fn predict_uses_positive_sign_at_zero() {
        let m = LinearModel::new(vec![1.0, 0.0]);
        assert_eq!(m.predict(&[0.0, 3.0]), 1);
        assert_eq!(m.predict(&[-0.1, 3.0]), -1);
    }

    #[test]
    fn rejects_bad_labels_and_dims() {
        assert!(LabeledExample::new(vec![1.0], 0).is_err());
        assert!(LabeledExample::new(vec![f64::NAN], 1).is_err());
        assert!(Dataset::new(vec![ex(&[1.0], 1), ex(&[1.0, 2.0], 1)]).is_err());
        assert!(batch_svm_train(&Dataset::empty(0), 1.0).is_err());
    }

    #[test]
    fn svm_one_dimensional_matches_grid() {
        let data = Dataset::from_pairs(&[(&[-1.0], -1), (&[1.0], 1)]).unwrap();
        let w = batch_svm_train(&data, 0.1).unwrap();
        assert!(w.weights[0] > 0.0);
        let cfg = LearnerConfig { lambda: 0.1, ..Default::default() };
        let obj = training_objective(&data, &w, &cfg);
        // Grid oracle over w ∈ [-5, 5], step 1e-3.
        let grid_min = (0..=10_000)
            .map(|i| -5.0 + i as f64 * 1e-3)
            .map(|v| training_objective(&data, &LinearModel::new(vec![v]), &cfg))
            .fold(f64::INFINITY, f64::min);
        assert!((obj - grid_min).abs() < 1e-3, "obj {obj} grid {grid_min}");
    }

    #[test]
    fn svm_degenerate_cases() {
        assert_eq!(batch_svm_train(&Dataset::empty(2), 1.0).unwrap().weights, vec![0.0, 0.0]);
        let data = Dataset::from_pairs(&[(&[1.0], 1), (&[1.0], -1)]).unwrap();
        assert_eq!(batch_svm_train(&data, 0.1).unwrap().weights, vec![0.0]);
    }

    #[test]
    fn svm_hard_margin_fallback() {
        let data = Dataset::from_pairs(&[(&[-2.0], -1), (&[2.0], 1)]).unwrap();
        let w = batch_svm_train(&data, 0.0).unwrap();
        assert!(w.weights[0] >= 0.5 - 1e-9, "{w:?}");
        assert_eq!(data.error_rate(&w), 0.0);
    }

    #[test]
    fn svm_with_bias() {
        let data = Dataset::from_pairs(&[(&[2.0], -1), (&[3.0], -1), (&[5.0], 1), (&[6.0], 1)]).unwrap();
        let cfg = LearnerConfig { lambda: 0.01, fit_bias: true, ..Default::default() };
        let m = train_batch(&data, &cfg).unwrap();
        assert_eq!(data.error_rate(&m), 0.0, "{m:?}");
        assert!(m.bias < 0.0);
    }

    #[test]
    fn logistic_training_separates() {
        let data = Dataset::from_pairs(&[(&[-1.0, 0.5], -1), (&[1.0, 0.2], 1), (&[2.0, -0.3], 1)]).unwrap();
        let cfg = LearnerConfig { lambda: 0.1, loss: Loss::Logistic, ..Default::default() };
        let m = train_batch(&data, &cfg).unwrap();
        assert_eq!(data.error_rate(&m), 0.0);
        let theta = m.params(false);
        let g = data.iter().fold(theta.iter().map(|t| 0.2 * t).collect::<Vec<_>>(), |mut acc, e| {
            for (a, b) in acc.iter_mut().zip(param_gradient(Loss::Logistic, &theta, &e.features, e.y(), 0.0)) {
                *a += b;
            }
            acc
        });
        assert!(Norm::LInf.eval(&g) < 1e-8);
    }

    #[test]
    fn sgd_step_examples() {
        let w = sgd_step(&LinearModel::zeros(2), &ex(&[1.0, 1.0], 1), 0.5, 0.0).unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
        let w = sgd_step(&LinearModel::new(vec![2.0, 0.0]), &ex(&[1.0, 0.0], 1), 0.5, 0.0).unwrap();
        assert_eq!(w.weights, vec![2.0, 0.0]);
        let w = sgd_step(&LinearModel::new(vec![1.0, 0.0]), &ex(&[0.0, 1.0], 1), 0.1, 1.0).unwrap();
        assert!((w.weights[0] - 0.8).abs() < 1e-15 && (w.weights[1] - 0.1).abs() < 1e-15);
        assert!(sgd_step(&LinearModel::zeros(2), &ex(&[1.0], 1), 0.1, 0.0).is_err());
    }

    #[test]
    fn sgd_gradient_matches_central_differences() {
        // f(w) = hinge(w, x, y) + λ‖w‖² at a non-kink point; FD step 1e-5.
        let w0 = [1.0, 0.0];
        let x = [0.0, 1.0];
        let lambda = 1.0;
        let f = |w: &[f64]| loss_value(Loss::Hinge, w, &x, 1.0) + lambda * dot(w, w);
        let g = param_gradient(Loss::Hinge, &w0, &x, 1.0, lambda);
        for j in 0..2 {
            let mut a = w0;
            let mut b = w0;
            a[j] += 1e-5;
            b[j] -= 1e-5;
            let fd = (f(&a) - f(&b)) / 2e-5;
            assert!((fd - g[j]).abs() <= 1e-4 * fd.abs().max(1e-8), "coord {j}: fd {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn dataset_text_roundtrip_and_errors() {
        let text = "# y,x_1,x_2\n1,0.5,-2\n-1, 3, 4\n\n+1,0,0\n";
        let d: Dataset = text.parse().unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.examples()[2].label, 1);
        let back: Dataset = d.to_text().parse().unwrap();
        assert_eq!(back, d);
        assert!(matches!("1,2\n1,2,3\n".parse::<Dataset>(), Err(Error::Parse { line: 2, .. })));
        assert!(matches!("2,1\n".parse::<Dataset>(), Err(Error::Parse { line: 1, .. })));
        assert!("# only header\n".parse::<Dataset>().is_err());
    }

    proptest! {
        #[test]
        fn zero_step_is_identity(w in prop::collection::vec(-3.0f64..3.0, 3),
                                 x in prop::collection::vec(-3.0f64..3.0, 3),
                                 pos in any::<bool>(), lambda in 0.0f64..2.0) {
            let item = ex(&x, if pos { 1 } else { -1 });
            let m = LinearModel::new(w);
            prop_assert_eq!(sgd_step(&m, &item, 0.0, lambda).unwrap(), m.clone());
            if item.y() * m.score(&x) >= 1.0 {
                prop_assert_eq!(sgd_step(&m, &item, 0.3, 0.0).unwrap(), m);
            }
        }

        #[test]
        fn gradient_matches_fd_away_from_kink(w in prop::collection::vec(-2.0f64..2.0, 3),
                                              x in prop::collection::vec(-2.0f64..2.0, 3),
                                              pos in any::<bool>(), lambda in 0.0f64..1.0,
                                              logistic in any::<bool>()) {
            let y = if pos { 1.0 } else { -1.0 };
            prop_assume!((y * dot(&w, &x) - 1.0).abs() > 1e-3);
            let loss = if logistic { Loss::Logistic } else { Loss::Hinge };
            let f = |v: &[f64]| loss_value(loss, v, &x, y) + lambda * dot(v, v);
            let g = param_gradient(loss, &w, &x, y, lambda);
            for j in 0..3 {
                let mut a = w.clone();
                let mut b = w.clone();
                a[j] += 1e-5;
                b[j] -= 1e-5;
                let fd = (f(&a) - f(&b)) / 2e-5;
                prop_assert!((fd - g[j]).abs() <= 1e-4 * fd.abs().max(1e-3));
            }
        }

        #[test]
        fn prediction_flips_under_negation(w in prop::collection::vec(-2.0f64..2.0, 2),
                                           x in prop::collection::vec(-2.0f64..2.0, 2)) {
            let m = LinearModel::new(w.clone());
            prop_assume!(m.score(&x).abs() > 1e-9);
            let neg = LinearModel::new(w.iter().map(|v| -v).collect());
            prop_assert_eq!(m.predict(&x), -neg.predict(&x));
        }

        #[test]
        fn svm_separates_two_points(a in -3.0f64..-0.2, b in 0.2f64..3.0, lambda in 0.001f64..0.1) {
            let data = Dataset::from_pairs(&[(&[a], -1), (&[b], 1)]).unwrap();
            let w = batch_svm_train(&data, lambda).unwrap();
            prop_assert_eq!(data.error_rate(&w), 0.0);
        }
    }
}
