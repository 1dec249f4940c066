//! Training-sequence poisoning of an online gradient learner:
//! w_{t+1} = w_t − η_t ∇ℓ(w_t, x_t, y_t), with the adversary choosing x_t.

use crate::control::{rollout, BoxSet, Control, ControlProblem, ControlSet, Horizon, SimRng, Trajectory};
use crate::error::{Error, Result};
use crate::learners::{LabeledExample, LearnerConfig, LinearModel, Loss};
use crate::linalg::{dot, Norm};
use crate::solvers::{GridAxis, SolverReport, SolverStatus};

use super::{AttackGoal, CleanReference, Distance, SolverChoice};

/// Label patterns are enumerated exhaustively up to this horizon; longer
/// horizons keep the clean labels.
pub const ENUMERATE_LABELS_UP_TO: usize = 8;

/// Sequential poisoning with the label sequence fixed; controls are the
/// features x_t. The clean reference is read cyclically: ũ_t = data[t mod n].
#[derive(Debug, Clone)]
pub struct SequentialPoisonProblem {
    clean: CleanReference,
    goal: AttackGoal,
    learner: LearnerConfig,
    labels: Vec<i8>,
    constraint: ControlSet,
    relaxed: bool,
}

impl SequentialPoisonProblem {
    pub fn new(
        clean: CleanReference,
        goal: AttackGoal,
        learner: LearnerConfig,
        labels: Vec<i8>,
        bounds: Option<BoxSet>,
    ) -> Result<Self> {
        learner.validate()?;
        let d = clean.data.dim();
        goal.check_model_goal(d)?;
        if labels.is_empty() {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if let Some(y) = labels.iter().find(|y| **y != 1 && **y != -1) {
            return Err(Error::invalid(format!("label must be -1 or +1, got {y}")));
        }
        let constraint = match bounds {
            Some(b) => {
                crate::linalg::check_dim(d, b.dim())?;
                ControlSet::Box(b)
            }
            None => ControlSet::Unconstrained,
        };
        Ok(Self {
            clean,
            goal,
            learner,
            labels,
            constraint,
            relaxed: false,
        })
    }

    pub fn relaxed(&self) -> Self {
        Self {
            relaxed: true,
            ..self.clone()
        }
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    fn reference(&self, step: usize) -> &LabeledExample {
        &self.clean.data.examples()[step % self.clean.data.len()]
    }

    /// The clean features, projected into the feature bounds.
    pub fn clean_controls(&self) -> Result<Vec<Control>> {
        (0..self.labels.len())
            .map(|t| crate::control::project_control(&self.constraint, &self.reference(t).features))
            .collect()
    }

    /// Controls that walk a hinge learner straight to a target model: each
    /// step's update covers an equal share of the remaining gap. Steps where
    /// the hinge would be inactive keep the clean features. `None` for goals
    /// without a target model, logistic loss, a bias, or a frozen learner.
    pub fn steering_controls(&self, w0: &LinearModel) -> Result<Option<Vec<Control>>> {
        let target = match &self.goal {
            AttackGoal::ExactModel { target } | AttackGoal::NearModel { target, .. } => target,
            _ => return Ok(None),
        };
        if self.learner.loss != Loss::Hinge || self.learner.fit_bias {
            return Ok(None);
        }
        let horizon = self.labels.len();
        let clean = self.clean_controls()?;
        let mut w = w0.clone();
        let mut out = Vec::with_capacity(horizon);
        for (t, fallback) in clean.into_iter().enumerate() {
            let eta = self.learner.rate.at(t);
            if eta <= 0.0 {
                return Ok(None);
            }
            let y = f64::from(self.labels[t]);
            let share = 1.0 / (horizon - t) as f64;
            // w' = w + η(y·x − 2λw), solved for x.
            let x: Vec<f64> = target
                .weights
                .iter()
                .zip(&w.weights)
                .map(|(ws, wt)| y * ((ws - wt) * share / eta + 2.0 * self.learner.lambda * wt))
                .collect();
            let x = crate::control::project_control(&self.constraint, &x)?;
            let u = if y * dot(&w.weights, &x) < 1.0 { x } else { fallback };
            w = self.learner.step(&w, &self.item(&u, t)?, t)?;
            out.push(u);
        }
        Ok(Some(out))
    }

    pub fn item(&self, control: &[f64], step: usize) -> Result<LabeledExample> {
        LabeledExample::new(control.to_vec(), self.labels[step])
    }
}

impl ControlProblem for SequentialPoisonProblem {
    type State = LinearModel;

    fn horizon(&self) -> Horizon {
        Horizon::Finite(self.labels.len())
    }

    fn control_dim(&self, _step: usize) -> usize {
        self.clean.data.dim()
    }

    fn constraint(&self, _step: usize) -> &ControlSet {
        &self.constraint
    }

    fn dynamics(&self, state: &LinearModel, control: &[f64], step: usize, _rng: &mut SimRng) -> Result<LinearModel> {
        self.learner.step(state, &self.item(control, step)?, step)
    }

    fn running_cost(&self, _state: &LinearModel, control: &[f64], step: usize) -> f64 {
        let r = self.reference(step);
        self.clean.effort_weight * self.clean.distance.item(control, self.labels[step], &r.features, r.label)
    }

    fn terminal_cost(&self, state: &LinearModel) -> f64 {
        self.goal.model_cost(state, self.relaxed)
    }

    fn is_smooth(&self) -> bool {
        self.clean.distance.is_smooth() && (self.relaxed || !self.goal.is_hard())
    }

    /// Reverse-mode gradient through the unrolled updates.
    fn objective_gradient(&self, x0: &LinearModel, controls: &[Control]) -> Option<Vec<Control>> {
        let norm = match self.clean.distance {
            Distance::EditCount => return None,
            Distance::SummedEuclidean => Norm::L2,
            Distance::PNorm(p) => p,
        };
        let fit_bias = self.learner.fit_bias;
        let mut models = vec![x0.clone()];
        let mut items = Vec::with_capacity(controls.len());
        for (t, u) in controls.iter().enumerate() {
            let item = self.item(u, t).ok()?;
            let next = self.learner.step(models.last()?, &item, t).ok()?;
            models.push(next);
            items.push(item);
        }
        let full = self.goal.model_cost_gradient(models.last()?)?;
        let d = x0.dim();
        let mut adj: Vec<f64> = if fit_bias { full } else { full[..d].to_vec() };
        let mut grads = vec![Vec::new(); controls.len()];
        for t in (0..controls.len()).rev() {
            let (j_theta, j_x) = self.learner.step_jacobians(&models[t], &items[t], t);
            let r = self.reference(t);
            let effort = norm.gradient(&crate::linalg::sub(&controls[t], &r.features));
            grads[t] = (0..d)
                .map(|k| {
                    let through: f64 = j_x.iter().zip(&adj).map(|(row, a)| row[k] * a).sum();
                    through + self.clean.effort_weight * effort[k]
                })
                .collect();
            adj = (0..adj.len())
                .map(|j| j_theta.iter().zip(&adj).map(|(row, a)| row[j] * a).sum())
                .collect();
        }
        Some(grads)
    }
}

#[derive(Debug, Clone)]
pub struct SequentialPoisonResult {
    /// The poisoned training sequence (x_t, y_t), t = 0..T−1.
    pub items: Vec<LabeledExample>,
    pub trajectory: Trajectory<LinearModel>,
    pub report: SolverReport,
    /// False when a hard goal could not be met (see `BatchPoisonResult`).
    pub feasible: bool,
}

/// Finds the training sequence minimizing Σ effort_t + g_T(w_T) from `w0`.
///
/// For T ≤ 8 every label pattern is tried (ties go to the first pattern in
/// enumeration order, which starts from the clean labels); longer horizons
/// keep clean labels. Local solvers start from the clean features and, when
/// available, from the steering sequence, keeping the better result.
pub fn sequential_poison(
    clean: &CleanReference,
    goal: &AttackGoal,
    learner: &LearnerConfig,
    w0: &LinearModel,
    horizon: usize,
    solver: &SolverChoice,
    bounds: Option<&BoxSet>,
) -> Result<SequentialPoisonResult> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if !matches!(
        goal,
        AttackGoal::ExactModel { .. } | AttackGoal::NearModel { .. } | AttackGoal::TargetSet { .. }
    ) {
        return Err(Error::invalid(format!("sequential poisoning does not support goal `{}`", goal.kind())));
    }
    crate::linalg::check_dim(clean.data.dim(), w0.dim())?;
    let clean_labels: Vec<i8> = (0..horizon)
        .map(|t| clean.data.examples()[t % clean.data.len()].label)
        .collect();
    let patterns: Vec<Vec<i8>> = if horizon <= ENUMERATE_LABELS_UP_TO {
        (0u32..1 << horizon)
            .map(|mask| {
                clean_labels
                    .iter()
                    .enumerate()
                    .map(|(t, y)| if mask >> t & 1 == 1 { -y } else { *y })
                    .collect()
            })
            .collect()
    } else {
        vec![clean_labels]
    };
    let solve_all = |relaxed: bool| -> Result<(SequentialPoisonProblem, SolverReport)> {
        let mut best: Option<(SequentialPoisonProblem, SolverReport)> = None;
        for labels in &patterns {
            let mut problem =
                SequentialPoisonProblem::new(clean.clone(), goal.clone(), learner.clone(), labels.clone(), bounds.cloned())?;
            if relaxed {
                problem = problem.relaxed();
            }
            let clean_init = problem.clean_controls()?;
            let mut inits = vec![clean_init.clone()];
            if !matches!(solver, SolverChoice::Grid { .. }) {
                inits.extend(problem.steering_controls(w0)?);
            }
            for init in &inits {
                let axes = |step: f64| grid_axes(&problem, &clean_init, step);
                let report = solver.solve(&problem, w0, axes, init)?;
                if best.as_ref().is_none_or(|(_, b)| report.best_objective < b.best_objective) {
                    best = Some((problem.clone(), report));
                }
            }
        }
        best.ok_or_else(|| Error::invalid("no label pattern to search"))
    };
    let (mut problem, mut report) = solve_all(false)?;
    let mut feasible = true;
    if !report.best_objective.is_finite() {
        feasible = false;
        let (relaxed, mut r) = solve_all(true)?;
        r.status = SolverStatus::Infeasible;
        problem = SequentialPoisonProblem { relaxed: false, ..relaxed };
        report = r;
    }
    let trajectory = rollout(&problem, &report.best_controls, w0, report.seed)?;
    let items = report
        .best_controls
        .iter()
        .enumerate()
        .map(|(t, u)| problem.item(u, t))
        .collect::<Result<_>>()?;
    Ok(SequentialPoisonResult {
        items,
        trajectory,
        report,
        feasible,
    })
}

/// Grid over each feature: the bounds when given, otherwise ±1 around the
/// clean value.
fn grid_axes(problem: &SequentialPoisonProblem, clean: &[Control], step: f64) -> Result<Vec<GridAxis>> {
    let mut axes = Vec::new();
    for u in clean {
        for (k, c) in u.iter().enumerate() {
            let (lo, hi) = match problem.constraint(0) {
                ControlSet::Box(b) => (b.lower()[k], b.upper()[k]),
                _ => (c - 1.0, c + 1.0),
            };
            axes.push(GridAxis::span(lo, hi, step)?);
        }
    }
    Ok(axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Distance;
    use crate::learners::{Dataset, LearningRate};
    use crate::solvers::{fd_gradient, PgOptions};
    use proptest::prelude::*;

    fn clean_1d() -> CleanReference {
        CleanReference::new(Dataset::from_pairs(&[(&[0.5], 1)]).unwrap(), Distance::SummedEuclidean)
            .unwrap()
            .with_effort_weight(0.05)
            .unwrap()
    }

    #[test]
    fn single_step_matches_feature_grid() {
        let clean = clean_1d();
        let goal = AttackGoal::near_model(LinearModel::new(vec![0.4]));
        let cfg = LearnerConfig::default();
        let w0 = LinearModel::zeros(1);
        let pg = SolverChoice::ProjectedGradient(PgOptions::default());
        let r = sequential_poison(&clean, &goal, &cfg, &w0, 1, &pg, None).unwrap();
        // Oracle: both labels, x on a fine grid.
        let step = 1e-4;
        let mut best = f64::INFINITY;
        for y in [1.0, -1.0] {
            for i in -60_000..=60_000 {
                let x = i as f64 * step;
                let w = 0.1 * y * x;
                let flip = if y < 0.0 { 1.0 } else { 0.0 };
                best = best.min((w - 0.4f64).abs() + 0.05 * ((x - 0.5f64).abs() + flip));
            }
        }
        assert!((r.report.best_objective - best).abs() < 1e-3, "{} vs {best}", r.report.best_objective);
    }

    #[test]
    fn frozen_learner_keeps_clean_data() {
        let clean = CleanReference::new(
            Dataset::from_pairs(&[(&[1.0, 0.0], 1), (&[0.0, 1.0], -1)]).unwrap(),
            Distance::SummedEuclidean,
        )
        .unwrap();
        let target = LinearModel::new(vec![1.0, -1.0]);
        let goal = AttackGoal::near_model(target.clone());
        let cfg = LearnerConfig {
            rate: LearningRate::Constant(0.0),
            ..LearnerConfig::default()
        };
        let w0 = LinearModel::new(vec![0.2, 0.3]);
        let pg = SolverChoice::ProjectedGradient(PgOptions {
            analytic: true,
            ..PgOptions::default()
        });
        let r = sequential_poison(&clean, &goal, &cfg, &w0, 4, &pg, None).unwrap();
        assert_eq!(r.trajectory.running_cost(), 0.0);
        let expected = Norm::L2.eval(&[0.2 - 1.0, 0.3 + 1.0]);
        assert!((r.trajectory.terminal_cost - expected).abs() < 1e-15);
        for (t, item) in r.items.iter().enumerate() {
            assert_eq!(item, &clean.data.examples()[t % 2]);
        }
    }

    #[test]
    fn reaches_target_in_two_dimensions() {
        let clean = CleanReference::new(
            Dataset::from_pairs(&[(&[1.0, 0.5], 1), (&[-0.5, -1.0], -1), (&[0.2, 1.0], 1)]).unwrap(),
            Distance::SummedEuclidean,
        )
        .unwrap()
        .with_effort_weight(0.01)
        .unwrap();
        let target = LinearModel::new(vec![1.0, -1.0]);
        let cfg = LearnerConfig::default();
        let pg = SolverChoice::ProjectedGradient(PgOptions {
            steps: 2000,
            analytic: true,
            ..PgOptions::default()
        });
        let r = sequential_poison(&clean, &AttackGoal::near_model(target.clone()), &cfg, &LinearModel::zeros(2), 50, &pg, None)
            .unwrap();
        let w = r.trajectory.final_state();
        assert!(Norm::L2.distance(&w.weights, &target.weights) <= 0.05, "{w:?}");
        assert_eq!(r.trajectory.total_cost, r.report.best_objective);
    }

    #[test]
    fn rejects_zero_horizon_and_bad_dims() {
        let clean = clean_1d();
        let goal = AttackGoal::near_model(LinearModel::new(vec![0.4]));
        let g = SolverChoice::Grid { step: 0.1 };
        let cfg = LearnerConfig::default();
        assert!(sequential_poison(&clean, &goal, &cfg, &LinearModel::zeros(1), 0, &g, None).is_err());
        assert!(matches!(
            sequential_poison(&clean, &goal, &cfg, &LinearModel::zeros(2), 1, &g, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn family(loss: Loss, fit_bias: bool) -> SequentialPoisonProblem {
        let clean = CleanReference::new(
            Dataset::from_pairs(&[(&[1.0, 0.5], 1), (&[-0.5, -1.0], -1), (&[0.3, 0.8], -1)]).unwrap(),
            Distance::SummedEuclidean,
        )
        .unwrap()
        .with_effort_weight(0.2)
        .unwrap();
        let cfg = LearnerConfig {
            lambda: 0.05,
            rate: LearningRate::InverseTime(0.5),
            loss,
            fit_bias,
        };
        let goal = AttackGoal::near_model(LinearModel::with_bias(vec![1.0, -1.0], 0.5));
        SequentialPoisonProblem::new(clean, goal, cfg, vec![1, -1, -1, 1, 1], None).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn analytic_gradient_matches_finite_differences(
            flat in prop::collection::vec(-2.0f64..2.0, 10),
            logistic in any::<bool>(),
            fit_bias in any::<bool>(),
        ) {
            let loss = if logistic { Loss::Logistic } else { Loss::Hinge };
            let p = family(loss, fit_bias);
            let controls: Vec<Control> = flat.chunks(2).map(<[f64]>::to_vec).collect();
            let w0 = LinearModel::with_bias(vec![0.1, 0.1], 0.0);
            let traj = rollout(&p, &controls, &w0, 0).unwrap();
            // Stay an FD step away from hinge and norm kinks.
            for (t, u) in controls.iter().enumerate() {
                let item = p.item(u, t).unwrap();
                let theta = traj.states[t].params(fit_bias);
                let x = crate::learners::augment(&item.features, fit_bias);
                prop_assume!(logistic || (item.y() * crate::linalg::dot(&theta, &x) - 1.0).abs() > 1e-3);
                let r = &p.clean.data.examples()[t % p.clean.data.len()];
                prop_assume!(Norm::L2.distance(u, &r.features) > 1e-3);
            }
            let analytic = p.objective_gradient(&w0, &controls).unwrap();
            let fd = fd_gradient(&p, &w0, &controls, 1e-6, 0).unwrap();
            for (a, f) in analytic.iter().flatten().zip(fd.iter().flatten()) {
                prop_assert!((a - f).abs() <= 1e-4 * a.abs().max(f.abs()).max(1.0), "{a} vs {f}");
            }
        }
    }
}
