//! Reward shaping against UCB: the adversary adds u_t to each observed reward
//! so that the learner keeps pulling a target arm i*.

use std::fmt::Write as _;

use crate::bandit::{mean_update, pseudo_regret, BanditEnv, BanditPlant, BanditState, UcbConfig};
use crate::control::{rollout_policy, seeded_rng, Control, ControlProblem, ControlSet, Horizon, Policy, SimRng, Trajectory};
use crate::error::{Error, Result};
use crate::harness::fmt_real;

use super::AttackGoal;

pub const SHAPING_CSV_HEADER: &str = "t,I_t,r_t,u_t,g_t,cumulative_cost,target_fraction_so_far";

fn target_of(goal: &AttackGoal, k: usize) -> Result<(usize, f64)> {
    match goal {
        AttackGoal::TargetArm { arm, lambda } if *arm < k => Ok((*arm, *lambda)),
        AttackGoal::TargetArm { arm, .. } => Err(Error::invalid(format!(
            "target arm {} is out of range for {k} arms",
            arm + 1
        ))),
        other => Err(Error::invalid(format!("reward shaping needs a target-arm goal, got `{}`", other.kind()))),
    }
}

/// Minimal-magnitude perturbation u of reward `r` for the pulled arm such that,
/// after the learner folds in r + u, the pulled arm's index at t + 1 sits δ
/// below the target arm's.
///
/// Returns 0 when the target itself was pulled, when the target has not been
/// pulled yet, or when the condition already holds at u = 0.
pub fn greedy_shaping_step(
    state: &BanditState,
    pulled: usize,
    r: f64,
    goal: &AttackGoal,
    delta: f64,
    config: &UcbConfig,
) -> Result<f64> {
    let (target, _) = target_of(goal, state.k())?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
    }
    if state.current_arm != Some(pulled) {
        return Err(Error::invalid(format!("arm {} is not the arm pulled at t = {}", pulled + 1, state.t)));
    }
    if pulled == target || state.counts[target] == 0 {
        return Ok(0.0);
    }
    let t_next = state.t + 1;
    let n = state.counts[pulled];
    let bound = config.index(state.means[target], state.counts[target], t_next) - delta - config.bonus(n + 1, t_next);
    let (unshaped, _) = mean_update(state.means[pulled], n, r);
    if unshaped <= bound {
        return Ok(0.0);
    }
    let sum = if n == 0 { 0.0 } else { state.means[pulled] * n as f64 };
    Ok(bound * (n + 1) as f64 - sum - r)
}

/// Reward shaping as a control problem over the bandit plant with
/// g_t = u_t² + λ·[I_t ≠ i*].
#[derive(Debug, Clone)]
pub struct RewardShapingProblem {
    pub plant: BanditPlant,
    target: usize,
    lambda: f64,
    horizon: usize,
    constraint: ControlSet,
}

impl RewardShapingProblem {
    pub fn new(plant: BanditPlant, goal: &AttackGoal, horizon: usize) -> Result<Self> {
        let (target, lambda) = target_of(goal, plant.env.k())?;
        Ok(Self {
            plant,
            target,
            lambda,
            horizon,
            constraint: ControlSet::Unconstrained,
        })
    }
}

impl ControlProblem for RewardShapingProblem {
    type State = BanditState;

    fn horizon(&self) -> Horizon {
        Horizon::Finite(self.horizon)
    }

    fn control_dim(&self, _step: usize) -> usize {
        1
    }

    fn constraint(&self, _step: usize) -> &ControlSet {
        &self.constraint
    }

    fn dynamics(&self, state: &BanditState, control: &[f64], _step: usize, rng: &mut SimRng) -> Result<BanditState> {
        self.plant.transition(state, control[0], rng)
    }

    fn running_cost(&self, state: &BanditState, control: &[f64], _step: usize) -> f64 {
        let miss = f64::from(u8::from(state.current_arm != Some(self.target)));
        control[0] * control[0] + self.lambda * miss
    }

    fn terminal_cost(&self, _state: &BanditState) -> f64 {
        0.0
    }

    fn is_smooth(&self) -> bool {
        false
    }
}

/// Feedback policy applying `greedy_shaping_step` every round, or u ≡ 0 when
/// disabled.
#[derive(Debug, Clone)]
pub struct GreedyShapingPolicy {
    pub goal: AttackGoal,
    pub delta: f64,
    pub config: UcbConfig,
    pub enabled: bool,
}

impl Policy<BanditState> for GreedyShapingPolicy {
    fn act(&mut self, state: &BanditState, _step: usize) -> Result<Control> {
        if !self.enabled {
            return Ok(vec![0.0]);
        }
        let (Some(arm), Some(r)) = (state.current_arm, state.reward) else {
            return Err(Error::invalid("bandit state has no pending pull"));
        };
        Ok(vec![greedy_shaping_step(state, arm, r, &self.goal, self.delta, &self.config)?])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingRound {
    /// 1-based round.
    pub t: u64,
    /// 0-based arm index.
    pub arm: usize,
    pub reward: f64,
    pub shaping: f64,
    pub cost: f64,
    pub cumulative_cost: f64,
    pub target_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ShapingRun {
    pub rounds: Vec<ShapingRound>,
    pub trajectory: Trajectory<BanditState>,
    pub target: usize,
    pub total_cost: f64,
    pub target_fraction: f64,
    pub pseudo_regret: f64,
}

impl ShapingRun {
    /// Mean of u_t² over rounds t > `after`.
    pub fn mean_square_shaping_after(&self, after: u64) -> f64 {
        let tail: Vec<f64> = self
            .rounds
            .iter()
            .filter(|r| r.t > after)
            .map(|r| r.shaping * r.shaping)
            .collect();
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }

    pub fn total_shaping_effort(&self) -> f64 {
        self.rounds.iter().map(|r| r.shaping * r.shaping).sum()
    }

    /// Per-round CSV with arms numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SHAPING_CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t,
                r.arm + 1,
                fmt_real(r.reward),
                fmt_real(r.shaping),
                fmt_real(r.cost),
                fmt_real(r.cumulative_cost),
                fmt_real(r.target_fraction)
            );
        }
        out
    }
}

/// Simulates `horizon` rounds of UCB under the greedy shaping policy (or with
/// no shaping when `enabled` is false). Deterministic given `seed`.
pub fn shape_rewards(
    env: &BanditEnv,
    goal: &AttackGoal,
    config: &UcbConfig,
    horizon: usize,
    delta: f64,
    seed: u64,
    enabled: bool,
) -> Result<ShapingRun> {
    if horizon < env.k() {
        return Err(Error::invalid(format!("horizon {horizon} is shorter than the {} arms", env.k())));
    }
    let problem = RewardShapingProblem::new(BanditPlant::new(env.clone(), *config), goal, horizon)?;
    let mut policy = GreedyShapingPolicy {
        goal: goal.clone(),
        delta,
        config: *config,
        enabled,
    };
    let mut rng = seeded_rng(seed);
    let x0 = problem.plant.initial_state(&mut rng)?;
    let trajectory = rollout_policy(&problem, &mut policy, &x0, horizon, &mut rng)?;
    let mut rounds = Vec::with_capacity(horizon);
    let mut cumulative = 0.0;
    let mut hits = 0u64;
    let mut pulls = Vec::with_capacity(horizon);
    for (i, ((s, u), g)) in trajectory
        .states
        .iter()
        .zip(&trajectory.controls)
        .zip(&trajectory.step_costs)
        .enumerate()
    {
        let arm = s.current_arm.expect("rollout states carry a pull");
        pulls.push(arm);
        cumulative += g;
        hits += u64::from(arm == problem.target);
        rounds.push(ShapingRound {
            t: i as u64 + 1,
            arm,
            reward: s.reward.expect("rollout states carry a reward"),
            shaping: u[0],
            cost: *g,
            cumulative_cost: cumulative,
            target_fraction: hits as f64 / (i + 1) as f64,
        });
    }
    Ok(ShapingRun {
        target: problem.target,
        total_cost: trajectory.total_cost,
        target_fraction: hits as f64 / horizon as f64,
        pseudo_regret: pseudo_regret(&pulls, env)?,
        rounds,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goal2() -> AttackGoal {
        AttackGoal::target_arm(1, 1.0).unwrap()
    }

    fn state(counts: &[u64], means: &[f64], t: u64, arm: usize) -> BanditState {
        BanditState {
            counts: counts.to_vec(),
            means: means.to_vec(),
            current_arm: Some(arm),
            t,
            reward: None,
        }
    }

    /// Smallest |u| on a 1e-4 grid over [−10, 10] meeting the index condition.
    fn brute_force(s: &BanditState, pulled: usize, r: f64, target: usize, delta: f64, cfg: &UcbConfig) -> f64 {
        let t1 = s.t + 1;
        let goal_index = cfg.index(s.means[target], s.counts[target], t1) - delta;
        let mut best: Option<f64> = None;
        for i in -100_000i64..=100_000 {
            let u = i as f64 * 1e-4;
            let (m, n) = mean_update(s.means[pulled], s.counts[pulled], r + u);
            if cfg.index(m, n, t1) <= goal_index && best.is_none_or(|b| u.abs() < b.abs()) {
                best = Some(u);
            }
        }
        best.expect("grid wide enough")
    }

    #[test]
    fn target_pulled_or_slack_gives_zero() {
        let cfg = UcbConfig::default();
        let s = state(&[5, 5], &[0.9, 0.1], 11, 1);
        assert_eq!(greedy_shaping_step(&s, 1, 1.0, &goal2(), 0.01, &cfg).unwrap(), 0.0);
        let s = state(&[5, 5], &[0.1, 0.9], 11, 0);
        assert_eq!(greedy_shaping_step(&s, 0, 0.0, &goal2(), 0.01, &cfg).unwrap(), 0.0);
        let s = state(&[1, 0], &[0.9, 0.0], 2, 0);
        assert_eq!(greedy_shaping_step(&s, 0, 1.0, &goal2(), 0.01, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn matches_brute_force_example() {
        let cfg = UcbConfig::default();
        let s = state(&[5, 5], &[0.9, 0.1], 11, 0);
        for r in [0.0, 1.0] {
            let u = greedy_shaping_step(&s, 0, r, &goal2(), 0.01, &cfg).unwrap();
            let oracle = brute_force(&s, 0, r, 1, 0.01, &cfg);
            assert!((u - oracle).abs() <= 2e-4, "{u} vs {oracle}");
            let (m, n) = mean_update(0.9, 5, r + u);
            let gap = cfg.index(0.1, 5, 12) - 0.01 - cfg.index(m, n, 12);
            assert!(gap.abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = UcbConfig::default();
        let s = state(&[5, 5], &[0.9, 0.1], 11, 0);
        assert!(greedy_shaping_step(&s, 1, 0.0, &goal2(), 0.01, &cfg).is_err());
        assert!(greedy_shaping_step(&s, 0, 0.0, &goal2(), 0.0, &cfg).is_err());
        let far = AttackGoal::target_arm(5, 1.0).unwrap();
        assert!(greedy_shaping_step(&s, 0, 0.0, &far, 0.01, &cfg).is_err());
        let env = BanditEnv::bernoulli(&[0.8, 0.2]).unwrap();
        assert!(shape_rewards(&env, &far, &cfg, 100, 0.01, 0, true).is_err());
        assert!(shape_rewards(&env, &goal2(), &cfg, 1, 0.01, 0, true).is_err());
    }

    #[test]
    fn single_arm_is_always_the_target() {
        let env = BanditEnv::bernoulli(&[0.4]).unwrap();
        let goal = AttackGoal::target_arm(0, 1.0).unwrap();
        let run = shape_rewards(&env, &goal, &UcbConfig::default(), 200, 0.01, 3, true).unwrap();
        assert_eq!(run.target_fraction, 1.0);
        assert_eq!(run.total_cost, 0.0);
    }

    #[test]
    fn lambda_only_rescales_reported_cost() {
        let env = BanditEnv::bernoulli(&[0.8, 0.2]).unwrap();
        let cfg = UcbConfig::default();
        let runs: Vec<ShapingRun> = [0.5, 1.0, 4.0]
            .iter()
            .map(|l| shape_rewards(&env, &AttackGoal::target_arm(1, *l).unwrap(), &cfg, 2000, 0.01, 7, true).unwrap())
            .collect();
        for (run, l) in runs.iter().zip([0.5, 1.0, 4.0]) {
            assert_eq!(run.target_fraction, runs[0].target_fraction);
            let misses = run.rounds.iter().filter(|r| r.arm != 1).count() as f64;
            let expected = run.total_shaping_effort() + l * misses;
            assert!((run.total_cost - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }

    #[test]
    fn csv_shape_and_determinism() {
        let env = BanditEnv::bernoulli(&[0.8, 0.2]).unwrap();
        let a = shape_rewards(&env, &goal2(), &UcbConfig::default(), 50, 0.01, 1, true).unwrap();
        let b = shape_rewards(&env, &goal2(), &UcbConfig::default(), 50, 0.01, 1, true).unwrap();
        let csv = a.to_csv();
        assert_eq!(csv, b.to_csv());
        assert_eq!(csv.lines().next().unwrap(), SHAPING_CSV_HEADER);
        assert_eq!(csv.lines().count(), 51);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,1,"));
    }
}
