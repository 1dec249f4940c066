//! The adversary problems. Training-set poisoning comes in batch and
//! sequential forms; evasion attacks a fixed model at test time; reward
//! shaping attacks a UCB bandit.

use std::fmt;

use crate::control::{Control, ControlProblem};
use crate::error::{Error, Result};
use crate::learners::{Dataset, LinearModel};
use crate::linalg::Norm;
use crate::solvers::{self, CemOptions, GridAxis, PgOptions, SolverReport};

mod batch;
mod evasion;
mod sequential;
mod shaping;

pub use batch::{batch_poison, BatchPoisonProblem, BatchPoisonResult, BatchSurface};
pub use evasion::{evasion_indicator_problem, evasion_problem, testtime_attack};
pub use sequential::{sequential_poison, SequentialPoisonProblem, SequentialPoisonResult, ENUMERATE_LABELS_UP_TO};
pub use shaping::{
    greedy_shaping_step, shape_rewards, GreedyShapingPolicy, RewardShapingProblem, ShapingRound, ShapingRun,
    SHAPING_CSV_HEADER,
};

/// Equality tolerance for the exact-model goal, in ∞-norm over the parameters.
pub const EXACT_MODEL_TOL: f64 = 1e-9;

/// What the adversary wants to achieve.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackGoal {
    /// Arrive at w* exactly (a hard terminal constraint).
    ExactModel { target: LinearModel },
    /// Arrive close to w*, paying ‖w − w*‖.
    NearModel { target: LinearModel, norm: Norm },
    /// Land in W* = {w : w·x* + b ≥ ε} (a hard terminal constraint).
    TargetSet { item: Vec<f64>, epsilon: f64 },
    /// Flip the predicted label of x, crossing the boundary by τ in score.
    FlipItem { item: Vec<f64>, tau: f64 },
    /// Make the bandit pull arm i*, trading shaping effort against misses by λ.
    TargetArm { arm: usize, lambda: f64 },
}

impl AttackGoal {
    pub fn near_model(target: LinearModel) -> Self {
        AttackGoal::NearModel {
            target,
            norm: Norm::L2,
        }
    }

    pub fn target_set(item: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be finite, got {epsilon}")));
        }
        Ok(AttackGoal::TargetSet { item, epsilon })
    }

    pub fn flip_item(item: Vec<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
        }
        Ok(AttackGoal::FlipItem { item, tau })
    }

    pub fn target_arm(arm: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(AttackGoal::TargetArm { arm, lambda })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AttackGoal::ExactModel { .. } => "exact-model",
            AttackGoal::NearModel { .. } => "near-model",
            AttackGoal::TargetSet { .. } => "target-set",
            AttackGoal::FlipItem { .. } => "flip-item",
            AttackGoal::TargetArm { .. } => "target-arm",
        }
    }

    /// True for goals whose terminal cost is a 0/∞ indicator.
    pub fn is_hard(&self) -> bool {
        matches!(self, AttackGoal::ExactModel { .. } | AttackGoal::TargetSet { .. })
    }

    fn check_model_goal(&self, dim: usize) -> Result<()> {
        match self {
            AttackGoal::ExactModel { target } | AttackGoal::NearModel { target, .. } => {
                crate::linalg::check_dim(dim, target.dim())
            }
            AttackGoal::TargetSet { item, .. } => crate::linalg::check_dim(dim, item.len()),
            other => Err(Error::invalid(format!(
                "goal `{}` does not target a model (use exact-model, near-model or target-set)",
                other.kind()
            ))),
        }
    }

    /// g_T(w) for model goals. `relaxed` swaps hard indicators for the
    /// surrogates ‖w − w*‖₂ and (ε − w·x* − b)₊.
    fn model_cost(&self, model: &LinearModel, relaxed: bool) -> f64 {
        match self {
            AttackGoal::ExactModel { target } => {
                let diff = param_diff(model, target);
                if relaxed {
                    Norm::L2.eval(&diff)
                } else if Norm::LInf.eval(&diff) <= EXACT_MODEL_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            AttackGoal::NearModel { target, norm } => norm.eval(&param_diff(model, target)),
            AttackGoal::TargetSet { item, epsilon } => {
                let gap = epsilon - model.score(item);
                if relaxed {
                    gap.max(0.0)
                } else if gap <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            AttackGoal::FlipItem { .. } | AttackGoal::TargetArm { .. } => 0.0,
        }
    }

    /// ∂g_T/∂(w, b) for smooth model goals.
    fn model_cost_gradient(&self, model: &LinearModel) -> Option<Vec<f64>> {
        match self {
            AttackGoal::NearModel { target, norm } => Some(norm.gradient(&param_diff(model, target))),
            _ => None,
        }
    }
}

impl fmt::Display for AttackGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

/// (w − w*, b − b*) as one vector.
fn param_diff(model: &LinearModel, target: &LinearModel) -> Vec<f64> {
    let mut d = crate::linalg::sub(&model.weights, &target.weights);
    d.push(model.bias - target.bias);
    d
}

/// How poisoning effort is measured against the clean data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    /// Number of items that differ at all.
    EditCount,
    /// Σ ‖x_i − x̃_i‖₂ plus one per flipped label.
    SummedEuclidean,
    /// ‖X − X̃‖_p over all features stacked, plus one per flipped label.
    PNorm(Norm),
}

impl Distance {
    /// Per-item cost; `EditCount` and `SummedEuclidean` decompose over items.
    fn item(self, x: &[f64], y: i8, clean_x: &[f64], clean_y: i8) -> f64 {
        let flip = f64::from(u8::from(y != clean_y));
        match self {
            Distance::EditCount => f64::from(u8::from(y != clean_y || x != clean_x)),
            Distance::SummedEuclidean => Norm::L2.distance(x, clean_x) + flip,
            Distance::PNorm(p) => p.distance(x, clean_x) + flip,
        }
    }

    fn is_smooth(self) -> bool {
        !matches!(self, Distance::EditCount)
    }
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "edit-count" => Ok(Distance::EditCount),
            "summed-euclidean" => Ok(Distance::SummedEuclidean),
            other => other
                .strip_prefix("pnorm:")
                .and_then(|p| p.parse().ok())
                .map(Distance::PNorm)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown distance `{other}` (edit-count | summed-euclidean | pnorm:l1|l2|linf)"
                    ))
                }),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::EditCount => f.write_str("edit-count"),
            Distance::SummedEuclidean => f.write_str("summed-euclidean"),
            Distance::PNorm(p) => write!(f, "pnorm:{p}"),
        }
    }
}

/// The clean data ũ an attack is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanReference {
    pub data: Dataset,
    pub distance: Distance,
    /// Multiplier on the distance in the running cost.
    pub effort_weight: f64,
}

impl CleanReference {
    pub fn new(data: Dataset, distance: Distance) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("clean reference dataset is empty"));
        }
        Ok(Self {
            data,
            distance,
            effort_weight: 1.0,
        })
    }

    pub fn with_effort_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("effort weight must be >= 0, got {weight}")));
        }
        self.effort_weight = weight;
        Ok(self)
    }

    /// Weighted distance from the clean data to a same-size dataset.
    pub fn dataset_cost(&self, poisoned: &Dataset) -> f64 {
        let pairs = self.data.iter().zip(poisoned.iter());
        let raw = match self.distance {
            Distance::PNorm(p) => {
                let (a, b): (Vec<f64>, Vec<f64>) = pairs
                    .clone()
                    .flat_map(|(c, q)| c.features.iter().copied().zip(q.features.iter().copied()))
                    .unzip();
                let flips = pairs.filter(|(c, q)| c.label != q.label).count() as f64;
                p.distance(&a, &b) + flips
            }
            d => pairs.map(|(c, q)| d.item(&q.features, q.label, &c.features, c.label)).sum(),
        };
        self.effort_weight * raw
    }
}

/// Which optimizer an attack uses, with its settings.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverChoice {
    /// Exhaustive search; `step` is the lattice spacing for continuous controls.
    Grid { step: f64 },
    ProjectedGradient(PgOptions),
    CrossEntropy(CemOptions),
}

impl SolverChoice {
    pub fn name(&self) -> &'static str {
        match self {
            SolverChoice::Grid { .. } => "grid",
            SolverChoice::ProjectedGradient(_) => "projected-gradient",
            SolverChoice::CrossEntropy(_) => "cross-entropy",
        }
    }

    fn solve<P: ControlProblem>(
        &self,
        problem: &P,
        x0: &P::State,
        axes: impl FnOnce(f64) -> Result<Vec<GridAxis>>,
        init: &[Control],
    ) -> Result<SolverReport> {
        match self {
            SolverChoice::Grid { step } => solvers::grid_search(problem, x0, &axes(*step)?, 0),
            SolverChoice::ProjectedGradient(o) => solvers::projected_gradient(problem, x0, init, o),
            SolverChoice::CrossEntropy(o) => {
                let mut o = o.clone();
                o.init_mean.get_or_insert_with(|| init.to_vec());
                solvers::cross_entropy(problem, x0, &o)
            }
        }
    }
}

/// Symmetric lattice {i·step : |i·step| ≤ radius}, containing 0 exactly.
fn centered_axis(radius: f64, step: f64) -> Result<GridAxis> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("grid step must be > 0, got {step}")));
    }
    let m = (radius / step + 1e-9).floor() as i64;
    Ok(GridAxis::Values((-m..=m).map(|i| i as f64 * step).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LabeledExample;

    #[test]
    fn goal_costs() {
        let target = LinearModel::new(vec![1.0, -1.0]);
        let exact = AttackGoal::ExactModel { target: target.clone() };
        assert_eq!(exact.model_cost(&target, false), 0.0);
        assert_eq!(exact.model_cost(&LinearModel::new(vec![1.0, -0.9]), false), f64::INFINITY);
        let near = AttackGoal::near_model(target);
        assert!((near.model_cost(&LinearModel::new(vec![0.0, 0.0]), false) - 2f64.sqrt()).abs() < 1e-15);
        let set = AttackGoal::target_set(vec![1.0, 0.0], 0.5).unwrap();
        assert_eq!(set.model_cost(&LinearModel::new(vec![0.5, 3.0]), false), 0.0);
        assert_eq!(set.model_cost(&LinearModel::new(vec![0.2, 3.0]), true), 0.3);
        assert!(AttackGoal::target_arm(1, 0.0).is_err());
        assert!(AttackGoal::flip_item(vec![0.0], -1.0).is_err());
    }

    #[test]
    fn dataset_cost_by_distance() {
        let clean = Dataset::from_pairs(&[(&[0.0, 0.0], 1), (&[1.0, 1.0], -1)]).unwrap();
        let mut poisoned = Dataset::empty(2);
        poisoned.push(LabeledExample::new(vec![3.0, 4.0], 1).unwrap()).unwrap();
        poisoned.push(LabeledExample::new(vec![1.0, 1.0], 1).unwrap()).unwrap();
        let cost = |d| CleanReference::new(clean.clone(), d).unwrap().dataset_cost(&poisoned);
        assert_eq!(cost(Distance::EditCount), 2.0);
        assert_eq!(cost(Distance::SummedEuclidean), 6.0);
        assert_eq!(cost(Distance::PNorm(Norm::LInf)), 5.0);
        assert_eq!(cost(Distance::PNorm(Norm::L1)), 8.0);
        let half = CleanReference::new(clean, Distance::EditCount)
            .unwrap()
            .with_effort_weight(0.5)
            .unwrap();
        assert_eq!(half.dataset_cost(&poisoned), 1.0);
    }

    #[test]
    fn distance_round_trip() {
        for d in [Distance::EditCount, Distance::SummedEuclidean, Distance::PNorm(Norm::L1)] {
            assert_eq!(d.to_string().parse::<Distance>().unwrap(), d);
        }
        assert!("hamming".parse::<Distance>().is_err());
    }

    #[test]
    fn centered_axis_holds_zero() {
        let a = centered_axis(1.0, 0.1).unwrap();
        assert_eq!(a.len(), 21);
        assert_eq!(a.point(10), 0.0);
    }
}
