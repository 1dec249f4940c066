//! One-step poisoning of a batch learner: u_0 is the training set handed to
//! the learner, w_1 = train(u_0).

use crate::control::{rollout, BoxSet, Control, ControlProblem, ControlSet, Horizon, SimRng, Trajectory};
use crate::error::{Error, Result};
use crate::learners::{train_batch, Dataset, LabeledExample, LearnerConfig, LinearModel};
use crate::solvers::{GridAxis, SolverReport, SolverStatus};

use super::{centered_axis, AttackGoal, CleanReference, SolverChoice};

/// What the adversary may change in the fixed-size clean dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchSurface {
    /// One control per item in [0, 1]; values above 0.5 flip that item's label.
    LabelFlip,
    /// Additive feature edits with every coordinate in [−radius, radius], on
    /// the listed items (all items when `editable` is `None`).
    FeaturePerturbation { radius: f64, editable: Option<Vec<usize>> },
}

/// Batch poisoning as a horizon-1 control problem over model states.
#[derive(Debug, Clone)]
pub struct BatchPoisonProblem {
    clean: CleanReference,
    goal: AttackGoal,
    learner: LearnerConfig,
    surface: BatchSurface,
    editable: Vec<usize>,
    constraint: ControlSet,
    relaxed: bool,
}

impl BatchPoisonProblem {
    pub fn new(clean: CleanReference, goal: AttackGoal, learner: LearnerConfig, surface: BatchSurface) -> Result<Self> {
        learner.validate()?;
        goal.check_model_goal(clean.data.dim())?;
        let n = clean.data.len();
        let (editable, constraint) = match &surface {
            BatchSurface::LabelFlip => ((0..n).collect(), ControlSet::Box(BoxSet::uniform(n, 0.0, 1.0)?)),
            BatchSurface::FeaturePerturbation { radius, editable } => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::invalid(format!("perturbation radius must be >= 0, got {radius}")));
                }
                let items = editable.clone().unwrap_or_else(|| (0..n).collect());
                let mut seen = vec![false; n];
                for &i in &items {
                    if i >= n || std::mem::replace(&mut seen[i], true) {
                        return Err(Error::invalid(format!("editable item {i} is out of range or repeated")));
                    }
                }
                let dim = items.len() * clean.data.dim();
                (items, ControlSet::Box(BoxSet::uniform(dim, -radius, *radius)?))
            }
        };
        Ok(Self {
            clean,
            goal,
            learner,
            surface,
            editable,
            constraint,
            relaxed: false,
        })
    }

    /// The same problem with hard goals replaced by their surrogates.
    pub fn relaxed(&self) -> Self {
        Self {
            relaxed: true,
            ..self.clone()
        }
    }

    pub fn initial_state(&self) -> LinearModel {
        LinearModel::zeros(self.clean.data.dim())
    }

    /// The poisoned dataset encoded by control `u`.
    pub fn poisoned(&self, u: &[f64]) -> Result<Dataset> {
        crate::linalg::check_dim(self.constraint.dim().unwrap_or(0), u.len())?;
        let mut items: Vec<LabeledExample> = self.clean.data.examples().to_vec();
        match &self.surface {
            BatchSurface::LabelFlip => {
                for (item, flip) in items.iter_mut().zip(u) {
                    if *flip > 0.5 {
                        item.label = -item.label;
                    }
                }
            }
            BatchSurface::FeaturePerturbation { .. } => {
                let d = self.clean.data.dim();
                for (k, &i) in self.editable.iter().enumerate() {
                    for (x, du) in items[i].features.iter_mut().zip(&u[k * d..(k + 1) * d]) {
                        *x += du;
                    }
                }
            }
        }
        Dataset::new(items)
    }

    fn grid_axes(&self, step: f64) -> Result<Vec<GridAxis>> {
        let dim = self.control_dim(0);
        match &self.surface {
            BatchSurface::LabelFlip => Ok(vec![GridAxis::Values(vec![0.0, 1.0]); dim]),
            BatchSurface::FeaturePerturbation { radius, .. } => Ok(vec![centered_axis(*radius, step)?; dim]),
        }
    }
}

impl ControlProblem for BatchPoisonProblem {
    type State = LinearModel;

    fn horizon(&self) -> Horizon {
        Horizon::Finite(1)
    }

    fn control_dim(&self, _step: usize) -> usize {
        self.constraint.dim().unwrap_or(0)
    }

    fn constraint(&self, _step: usize) -> &ControlSet {
        &self.constraint
    }

    fn dynamics(&self, _state: &LinearModel, control: &[f64], _step: usize, _rng: &mut SimRng) -> Result<LinearModel> {
        train_batch(&self.poisoned(control)?, &self.learner)
    }

    fn running_cost(&self, _state: &LinearModel, control: &[f64], _step: usize) -> f64 {
        match self.poisoned(control) {
            Ok(d) => self.clean.dataset_cost(&d),
            Err(_) => f64::NAN,
        }
    }

    fn terminal_cost(&self, state: &LinearModel) -> f64 {
        self.goal.model_cost(state, self.relaxed)
    }

    fn is_smooth(&self) -> bool {
        matches!(self.surface, BatchSurface::FeaturePerturbation { .. })
            && self.clean.distance.is_smooth()
            && (self.relaxed || !self.goal.is_hard())
    }
}

#[derive(Debug, Clone)]
pub struct BatchPoisonResult {
    pub dataset: Dataset,
    pub trajectory: Trajectory<LinearModel>,
    pub report: SolverReport,
    /// False when the hard goal could not be met; `dataset` is then the best
    /// candidate for the relaxed goal and `report` describes that relaxed solve.
    pub feasible: bool,
}

/// Uniform starting edits for projected gradient, as fractions of the radius.
const START_FRACTIONS: [f64; 5] = [0.0, 0.5, -0.5, 1.0, -1.0];

/// Finds the poisoned dataset minimizing g_1(train(u_0)) + effort(u_0).
///
/// Projected gradient on feature edits runs from several uniform starting
/// edits and keeps the best result; other solvers start from the clean data.
pub fn batch_poison(
    clean: &CleanReference,
    goal: &AttackGoal,
    learner: &LearnerConfig,
    surface: &BatchSurface,
    solver: &SolverChoice,
) -> Result<BatchPoisonResult> {
    if !matches!(
        goal,
        AttackGoal::ExactModel { .. } | AttackGoal::NearModel { .. } | AttackGoal::TargetSet { .. }
    ) {
        return Err(Error::invalid(format!("batch poisoning does not support goal `{}`", goal.kind())));
    }
    let problem = BatchPoisonProblem::new(clean.clone(), goal.clone(), learner.clone(), surface.clone())?;
    let x0 = problem.initial_state();
    let dim = problem.control_dim(0);
    let starts: Vec<Vec<Control>> = match (surface, solver) {
        (BatchSurface::FeaturePerturbation { radius, .. }, SolverChoice::ProjectedGradient(_)) => START_FRACTIONS
            .iter()
            .map(|f| vec![vec![f * radius; dim]])
            .collect(),
        _ => vec![vec![vec![0.0; dim]]],
    };
    let solve_all = |p: &BatchPoisonProblem| -> Result<SolverReport> {
        let mut best: Option<SolverReport> = None;
        for init in &starts {
            let r = solver.solve(p, &x0, |s| p.grid_axes(s), init)?;
            if best.as_ref().is_none_or(|b| r.best_objective < b.best_objective) {
                best = Some(r);
            }
        }
        Ok(best.expect("at least one start"))
    };
    let mut report = solve_all(&problem)?;
    let mut feasible = true;
    if report.status == SolverStatus::Infeasible {
        feasible = false;
        report = solve_all(&problem.relaxed())?;
        report.status = SolverStatus::Infeasible;
    }
    let trajectory = rollout(&problem, &report.best_controls, &x0, report.seed)?;
    Ok(BatchPoisonResult {
        dataset: problem.poisoned(&report.best_controls[0])?,
        trajectory,
        report,
        feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Distance;
    use crate::learners::batch_svm_train;
    use crate::solvers::PgOptions;

    fn learner(lambda: f64) -> LearnerConfig {
        LearnerConfig {
            lambda,
            ..LearnerConfig::default()
        }
    }

    #[test]
    fn single_point_label_flip() {
        let data = Dataset::from_pairs(&[(&[1.0], 1)]).unwrap();
        let clean = CleanReference::new(data, Distance::EditCount)
            .unwrap()
            .with_effort_weight(0.5)
            .unwrap();
        let goal = AttackGoal::near_model(LinearModel::new(vec![-0.5]));
        let cfg = learner(0.5);
        let r = batch_poison(&clean, &goal, &cfg, &BatchSurface::LabelFlip, &SolverChoice::Grid { step: 1.0 }).unwrap();
        assert_eq!(r.dataset.examples()[0].label, -1);
        let w1 = r.trajectory.final_state().weights[0];
        assert!(w1 < 0.0);
        // Exhaustive oracle over both flip patterns.
        let best = [1i8, -1]
            .iter()
            .map(|&y| {
                let d = Dataset::from_pairs(&[(&[1.0], y)]).unwrap();
                let w = batch_svm_train(&d, 0.5).unwrap();
                (w.weights[0] + 0.5).abs() + if y == -1 { 0.5 } else { 0.0 }
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.report.best_objective - best).abs() < 1e-3);
    }

    #[test]
    fn clean_target_needs_no_attack() {
        let data = Dataset::from_pairs(&[(&[1.0, 0.5], 1), (&[-1.0, 0.2], -1), (&[0.3, -2.0], -1)]).unwrap();
        let cfg = learner(0.1);
        let w_clean = train_batch(&data, &cfg).unwrap();
        let clean = CleanReference::new(data.clone(), Distance::SummedEuclidean).unwrap();
        let goal = AttackGoal::ExactModel { target: w_clean };
        for surface in [
            BatchSurface::LabelFlip,
            BatchSurface::FeaturePerturbation {
                radius: 0.2,
                editable: Some(vec![0]),
            },
        ] {
            let r = batch_poison(&clean, &goal, &cfg, &surface, &SolverChoice::Grid { step: 0.1 }).unwrap();
            assert!(r.feasible);
            assert_eq!(r.dataset, data);
            assert_eq!(r.trajectory.running_cost(), 0.0);
        }
    }

    #[test]
    fn satisfied_target_set_costs_nothing() {
        let data = Dataset::from_pairs(&[(&[1.0], 1), (&[-1.0], -1)]).unwrap();
        let clean = CleanReference::new(data.clone(), Distance::SummedEuclidean).unwrap();
        let goal = AttackGoal::target_set(vec![2.0], 0.1).unwrap();
        let surface = BatchSurface::FeaturePerturbation {
            radius: 0.5,
            editable: None,
        };
        let r = batch_poison(&clean, &goal, &learner(0.5), &surface, &SolverChoice::Grid { step: 0.05 }).unwrap();
        assert_eq!(r.dataset, data);
        assert_eq!(r.report.best_objective, 0.0);
    }

    #[test]
    fn unreachable_hard_goal_is_reported_infeasible() {
        let data = Dataset::from_pairs(&[(&[1.0], 1), (&[-1.0], -1)]).unwrap();
        let clean = CleanReference::new(data, Distance::SummedEuclidean).unwrap();
        let goal = AttackGoal::target_set(vec![1.0], 100.0).unwrap();
        let surface = BatchSurface::FeaturePerturbation {
            radius: 0.2,
            editable: None,
        };
        let r = batch_poison(&clean, &goal, &learner(0.5), &surface, &SolverChoice::Grid { step: 0.1 }).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.report.status, SolverStatus::Infeasible);
        assert!(r.report.best_objective.is_finite());
        assert_eq!(r.trajectory.total_cost, f64::INFINITY);
    }

    #[test]
    fn pg_matches_grid_on_feature_edit() {
        let data = Dataset::from_pairs(&[(&[1.0], 1), (&[2.0], 1), (&[-1.5], -1)]).unwrap();
        let clean = CleanReference::new(data, Distance::SummedEuclidean)
            .unwrap()
            .with_effort_weight(0.2)
            .unwrap();
        let goal = AttackGoal::near_model(LinearModel::new(vec![0.3]));
        let surface = BatchSurface::FeaturePerturbation {
            radius: 1.0,
            editable: Some(vec![0]),
        };
        let cfg = learner(0.5);
        let g = batch_poison(&clean, &goal, &cfg, &surface, &SolverChoice::Grid { step: 1e-4 }).unwrap();
        let pg = SolverChoice::ProjectedGradient(PgOptions {
            steps: 2000,
            step_size: 0.05,
            ..PgOptions::default()
        });
        let p = batch_poison(&clean, &goal, &cfg, &surface, &pg).unwrap();
        assert!(
            (g.report.best_objective - p.report.best_objective).abs() < 1e-3,
            "grid {} pg {}",
            g.report.best_objective,
            p.report.best_objective
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = Dataset::from_pairs(&[(&[1.0], 1)]).unwrap();
        let clean = CleanReference::new(data, Distance::EditCount).unwrap();
        let cfg = learner(0.5);
        let arm = AttackGoal::target_arm(0, 1.0).unwrap();
        assert!(batch_poison(&clean, &arm, &cfg, &BatchSurface::LabelFlip, &SolverChoice::Grid { step: 1.0 }).is_err());
        let wrong_dim = AttackGoal::near_model(LinearModel::new(vec![1.0, 2.0]));
        assert!(matches!(
            batch_poison(&clean, &wrong_dim, &cfg, &BatchSurface::LabelFlip, &SolverChoice::Grid { step: 1.0 }),
            Err(Error::DimensionMismatch { .. })
        ));
        let surface = BatchSurface::FeaturePerturbation {
            radius: 1.0,
            editable: Some(vec![3]),
        };
        let goal = AttackGoal::near_model(LinearModel::new(vec![1.0]));
        assert!(batch_poison(&clean, &goal, &cfg, &surface, &SolverChoice::Grid { step: 1.0 }).is_err());
    }
}
