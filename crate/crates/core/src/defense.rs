//! Adversarial training as control of the model state, and measurement of
//! the margin property: no training point has a label flip within ε.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::control::{seeded_rng, SimRng};
use crate::error::{Error, Result};
use crate::harness::fmt_real;
use crate::learners::{sgd_step, Dataset, LabeledExample, LinearModel};
use crate::linalg::Norm;

/// Score margin used to push adversarial points past the boundary.
pub const PUSH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseConfig {
    pub epsilon: f64,
    pub norm: Norm,
    /// Maximum number of adversarial items k.
    pub iterations: usize,
    pub eta: f64,
    /// Regularizer λ of each update.
    pub lambda: f64,
    /// Probe count for the Monte-Carlo rate.
    pub samples: usize,
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            norm: Norm::L2,
            iterations: 10,
            eta: 0.1,
            lambda: 0.0,
            samples: 1000,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.samples == 0 {
            return Err(Error::invalid("sample count must be >= 1"));
        }
        Ok(())
    }
}

/// |w·x + b| / ‖w‖_q: the p-norm distance from x to the decision boundary.
pub fn boundary_distance(model: &LinearModel, x: &[f64], p: Norm) -> Result<f64> {
    crate::linalg::check_dim(model.dim(), x.len())?;
    if model.is_zero() {
        return Err(Error::ZeroModel);
    }
    Ok(model.score(x).abs() / p.dual().eval(&model.weights))
}

/// Exact test: does the closed ε-ball around the item contain a point
/// predicted ≠ y? Misclassified items always violate. A +1 item needs a point
/// with negative score (distance < ε); a −1 item only needs score 0
/// (distance ≤ ε), since sign(0) = +1.
pub fn violates_margin(model: &LinearModel, item: &LabeledExample, epsilon: f64, p: Norm) -> Result<bool> {
    let dist = boundary_distance(model, &item.features, p)?;
    if model.predict(&item.features) != item.label {
        return Ok(true);
    }
    Ok(if item.label == 1 { dist < epsilon } else { dist <= epsilon })
}

/// A point within ε of the item whose prediction differs from its label, if
/// one exists. Moves along the steepest p-norm direction to PUSH past the
/// boundary, falling back to the full ε step when that overshoots the ball.
pub fn find_adversarial(model: &LinearModel, item: &LabeledExample, epsilon: f64, p: Norm) -> Result<Option<Vec<f64>>> {
    if !violates_margin(model, item, epsilon, p)? {
        return Ok(None);
    }
    let x = &item.features;
    if model.predict(x) != item.label {
        return Ok(Some(x.clone()));
    }
    let dual = p.dual().eval(&model.weights);
    let d = p.steepest_direction(&model.weights);
    // Move against the label: +1 items decrease the score, −1 items raise it.
    let toward = -item.y();
    let mut t = (model.score(x).abs() + PUSH) / dual;
    if t > epsilon {
        t = epsilon;
    }
    let out: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + toward * t * di).collect();
    if model.predict(&out) != item.label && p.distance(&out, x) <= epsilon * (1.0 + 1e-12) {
        Ok(Some(out))
    } else {
        Ok(None)
    }
}

/// Exact fraction of items violating the margin property.
pub fn margin_violation_rate(model: &LinearModel, data: &Dataset, epsilon: f64, p: Norm) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut count = 0usize;
    for item in data.iter() {
        count += usize::from(violates_margin(model, item, epsilon, p)?);
    }
    Ok(count as f64 / data.len() as f64)
}

/// Model-agnostic estimate of the violation rate: `samples` probe points on
/// the ε-sphere are dealt to the items in turn, plus each item's centre and,
/// for p = 1 and small-dimensional p = ∞, the sphere's vertices. An item
/// violates if any probe is misclassified.
pub fn monte_carlo_violation_rate(
    model: &LinearModel,
    data: &Dataset,
    epsilon: f64,
    p: Norm,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    crate::linalg::check_dim(model.dim(), data.dim())?;
    let d = data.dim();
    let n = data.len();
    let mut rng = seeded_rng(seed);
    let mut hit: Vec<bool> = data.iter().map(|e| model.predict(&e.features) != e.label).collect();
    for j in 0..samples {
        let i = j % n;
        let offset = sphere_point(p, d, epsilon, &mut rng);
        let item = &data.examples()[i];
        let probe: Vec<f64> = item.features.iter().zip(&offset).map(|(a, b)| a + b).collect();
        hit[i] |= model.predict(&probe) != item.label;
    }
    for (i, item) in data.iter().enumerate() {
        for v in vertices(p, d, epsilon) {
            let probe: Vec<f64> = item.features.iter().zip(&v).map(|(a, b)| a + b).collect();
            hit[i] |= model.predict(&probe) != item.label;
        }
    }
    Ok(hit.iter().filter(|h| **h).count() as f64 / n as f64)
}

fn sphere_point(p: Norm, d: usize, radius: f64, rng: &mut SimRng) -> Vec<f64> {
    match p {
        Norm::L2 => {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let n = Norm::L2.eval(&g);
            g.iter().map(|v| radius * v / n).collect()
        }
        Norm::L1 => {
            let e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = e.iter().sum();
            e.iter()
                .map(|v| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * radius * v / s
                })
                .collect()
        }
        Norm::LInf => {
            let face = rng.random_range(0..d);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (0..d)
                .map(|j| if j == face { sign * radius } else { rng.random_range(-radius..=radius) })
                .collect()
        }
    }
}

fn vertices(p: Norm, d: usize, radius: f64) -> Vec<Vec<f64>> {
    match p {
        Norm::L2 => Vec::new(),
        Norm::L1 => (0..2 * d)
            .map(|k| {
                let mut v = vec![0.0; d];
                v[k / 2] = if k % 2 == 0 { radius } else { -radius };
                v
            })
            .collect(),
        Norm::LInf if d <= 10 => (0..1usize << d)
            .map(|mask| (0..d).map(|j| if mask >> j & 1 == 1 { radius } else { -radius }).collect())
            .collect(),
        Norm::LInf => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    /// 1-based iteration.
    pub iteration: usize,
    pub features: Vec<f64>,
    pub label: i8,
    /// Exact violation rate of the model after this update.
    pub violation_rate_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseRun {
    pub model: LinearModel,
    pub trail: Vec<AuditEntry>,
    pub initial_rate: f64,
    pub final_rate: f64,
    /// Monte-Carlo estimate of the final rate.
    pub final_rate_estimate: f64,
    /// Σ g_t with g_t = 1 per executed update.
    pub running_cost: f64,
    /// 1-based iteration at which the sweep found nothing, if it stopped early.
    pub stopped_at: Option<usize>,
}

impl DefenseRun {
    pub fn audit_csv(&self) -> String {
        let d = self.model.dim();
        let mut out = String::from("iteration");
        for j in 1..=d {
            let _ = write!(out, ",x{j}");
        }
        out.push_str(",y,violation_rate_after\n");
        for e in &self.trail {
            let _ = write!(out, "{}", e.iteration);
            for x in &e.features {
                let _ = write!(out, ",{}", fmt_real(*x));
            }
            let _ = writeln!(out, ",{},{}", e.label, fmt_real(e.violation_rate_after));
        }
        out
    }
}

/// Each of k rounds sweeps the data in order and attacks the first item that
/// has an adversarial point within ε. One gradient step on (x^(i), y)
/// follows. Stops early when no item yields an adversarial point.
pub fn adversarial_training(h0: &LinearModel, data: &Dataset, config: &DefenseConfig) -> Result<DefenseRun> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("defense needs a non-empty dataset"));
    }
    crate::linalg::check_dim(h0.dim(), data.dim())?;
    let rate = |m: &LinearModel| margin_violation_rate(m, data, config.epsilon, config.norm);
    let mut model = h0.clone();
    let mut trail = Vec::new();
    let mut stopped_at = None;
    for i in 1..=config.iterations {
        let mut found = None;
        for item in data.iter() {
            if let Some(x) = find_adversarial(&model, item, config.epsilon, config.norm)? {
                found = Some(LabeledExample::new(x, item.label)?);
                break;
            }
        }
        let Some(adv) = found else {
            stopped_at = Some(i);
            break;
        };
        model = sgd_step(&model, &adv, config.eta, config.lambda)?;
        if model.is_zero() {
            return Err(Error::ZeroModel);
        }
        trail.push(AuditEntry {
            iteration: i,
            features: adv.features,
            label: adv.label,
            violation_rate_after: rate(&model)?,
        });
    }
    Ok(DefenseRun {
        initial_rate: rate(h0)?,
        final_rate: rate(&model)?,
        final_rate_estimate: monte_carlo_violation_rate(&model, data, config.epsilon, config.norm, config.samples, config.seed)?,
        running_cost: trail.len() as f64,
        model,
        trail,
        stopped_at,
    })
}

/// Two Gaussian clusters in 2-D, centred at (1, 1) for +1 and (−1, −1) for −1
/// with standard deviation 0.5, `per_class` points each, classes interleaved.
pub fn two_cluster_toy(per_class: usize, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let mut data = Dataset::empty(2);
    for _ in 0..per_class {
        for (c, y) in [(1.0, 1i8), (-1.0, -1i8)] {
            let x: Vec<f64> = (0..2)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + 0.5 * z
                })
                .collect();
            data.push(LabeledExample::new(x, y).expect("finite features")).expect("uniform dimension");
        }
    }
    data
}

/// Starting model for the toy defense runs: a weak separator tilted off the
/// cluster axis.
pub fn toy_initial_model() -> LinearModel {
    LinearModel::new(vec![0.3, 0.05])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(x: &[f64], y: i8) -> LabeledExample {
        LabeledExample::new(x.to_vec(), y).unwrap()
    }

    #[test]
    fn boundary_geometry_examples() {
        let m = LinearModel::new(vec![1.0, 0.0]);
        let it = item(&[2.0, 0.0], 1);
        assert_eq!(find_adversarial(&m, &it, 1.0, Norm::L2).unwrap(), None);
        let x = find_adversarial(&m, &it, 3.0, Norm::L2).unwrap().unwrap();
        assert!(Norm::L2.distance(&x, &it.features) <= 3.0);
        assert_eq!(m.predict(&x), -1);
        assert_eq!(find_adversarial(&LinearModel::zeros(2), &it, 1.0, Norm::L2).unwrap_err(), Error::ZeroModel);
    }

    #[test]
    fn negative_items_flip_at_exact_distance() {
        // Score −1 at distance exactly 1: the boundary point predicts +1.
        let m = LinearModel::new(vec![1.0, 0.0]);
        let it = item(&[-1.0, 0.0], -1);
        assert!(violates_margin(&m, &it, 1.0, Norm::L2).unwrap());
        let x = find_adversarial(&m, &it, 1.0, Norm::L2).unwrap().unwrap();
        assert_eq!(m.predict(&x), 1);
        let pos = item(&[1.0, 0.0], 1);
        assert!(!violates_margin(&m, &pos, 1.0, Norm::L2).unwrap());
    }

    #[test]
    fn rate_limits() {
        let data = two_cluster_toy(4, 0);
        let m = LinearModel::with_bias(vec![0.4, -0.2], 0.1);
        assert_eq!(margin_violation_rate(&m, &data, 1e-12, Norm::L2).unwrap(), data.error_rate(&m));
        let pos = Dataset::from_pairs(&[(&[5.0, 5.0], 1), (&[6.0, 4.0], 1)]).unwrap();
        let far = LinearModel::with_bias(vec![1.0, 1.0], 0.0);
        assert_eq!(margin_violation_rate(&far, &pos, 0.1, Norm::L2).unwrap(), 0.0);
    }

    #[test]
    fn zero_iterations_and_no_active_constraints() {
        let data = Dataset::from_pairs(&[(&[5.0, 0.0], 1), (&[-5.0, 0.0], -1)]).unwrap();
        let h0 = LinearModel::new(vec![1.0, 0.0]);
        let cfg = DefenseConfig {
            iterations: 0,
            ..DefenseConfig::default()
        };
        let run = adversarial_training(&h0, &data, &cfg).unwrap();
        assert_eq!(run.model, h0);
        assert!(run.trail.is_empty());
        let run = adversarial_training(&h0, &data, &DefenseConfig::default()).unwrap();
        assert_eq!(run.model, h0);
        assert_eq!(run.stopped_at, Some(1));
        assert_eq!(run.running_cost, 0.0);
    }

    #[test]
    fn toy_defense_reduces_violations() {
        let data = two_cluster_toy(4, 0);
        let cfg = DefenseConfig {
            epsilon: 0.5,
            iterations: 10,
            eta: 0.1,
            ..DefenseConfig::default()
        };
        let run = adversarial_training(&toy_initial_model(), &data, &cfg).unwrap();
        assert!(run.final_rate < run.initial_rate, "{} -> {}", run.initial_rate, run.final_rate);
        assert!(run.trail.len() <= 10);
        assert_eq!(run.running_cost, run.trail.len() as f64);
        assert_eq!(run.audit_csv().lines().next().unwrap(), "iteration,x1,x2,y,violation_rate_after");
    }

    #[test]
    fn validation() {
        let bad = [
            DefenseConfig { epsilon: 0.0, ..DefenseConfig::default() },
            DefenseConfig { eta: 0.0, ..DefenseConfig::default() },
            DefenseConfig { samples: 0, ..DefenseConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        let h0 = LinearModel::new(vec![1.0]);
        assert!(adversarial_training(&h0, &Dataset::empty(1), &DefenseConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn found_points_satisfy_ball_and_flip(
            w in prop::collection::vec(-2.0f64..2.0, 3),
            bias in -1.0f64..1.0,
            x in prop::collection::vec(-2.0f64..2.0, 3),
            positive in any::<bool>(),
            eps in 0.01f64..2.0,
            p in 0usize..3,
        ) {
            let m = LinearModel::with_bias(w, bias);
            prop_assume!(!m.is_zero());
            let norm = [Norm::L1, Norm::L2, Norm::LInf][p];
            let it = item(&x, if positive { 1 } else { -1 });
            let exact = violates_margin(&m, &it, eps, norm).unwrap();
            match find_adversarial(&m, &it, eps, norm).unwrap() {
                Some(adv) => {
                    prop_assert!(exact);
                    prop_assert!(norm.distance(&adv, &x) <= eps * (1.0 + 1e-12));
                    prop_assert_ne!(m.predict(&adv), it.label);
                }
                None => prop_assert!(!exact),
            }
        }

        #[test]
        fn rate_is_monotone_in_epsilon(
            w in prop::collection::vec(-2.0f64..2.0, 2),
            e1 in 0.0f64..2.0,
            e2 in 0.0f64..2.0,
            seed in 0u64..50,
        ) {
            let m = LinearModel::new(w);
            prop_assume!(!m.is_zero());
            let data = two_cluster_toy(4, seed);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(
                margin_violation_rate(&m, &data, lo, Norm::L2).unwrap()
                    <= margin_violation_rate(&m, &data, hi, Norm::L2).unwrap()
            );
        }
    }
}
