//! Stochastic multi-armed bandit plant driven by (α, ψ)-UCB.
//!
//! Arms are indexed from 0 in code. Files and configs use 1-based arm
//! numbers; the harness converts at the boundary.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::control::{ControlProblem, ControlSet, Horizon, SimRng};
use crate::error::{Error, Result};

/// Reward distribution ν_i of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    Bernoulli(f64),
    Gaussian { mean: f64, sd: f64 },
}

impl Arm {
    pub fn mean(&self) -> f64 {
        match *self {
            Arm::Bernoulli(p) => p,
            Arm::Gaussian { mean, .. } => mean,
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            Arm::Bernoulli(p) => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Arm::Gaussian { mean, sd } => {
                if sd == 0.0 {
                    mean
                } else {
                    Normal::new(mean, sd).expect("validated sd").sample(rng)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Arm::Bernoulli(p) if (0.0..=1.0).contains(&p) => Ok(()),
            Arm::Bernoulli(p) => Err(Error::invalid(format!("bernoulli p must be in [0,1], got {p}"))),
            Arm::Gaussian { mean, sd } if mean.is_finite() && sd >= 0.0 && sd.is_finite() => Ok(()),
            Arm::Gaussian { mean, sd } => Err(Error::invalid(format!(
                "gaussian needs finite mean and sd >= 0, got {mean},{sd}"
            ))),
        }
    }
}

impl FromStr for Arm {
    type Err = Error;

    /// `bernoulli:p` or `gaussian:mu,sigma`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("arm `{s}` should look like bernoulli:p or gaussian:mu,sigma")))?;
        let nums = params
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{v}` in arm `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let arm = match (kind.trim(), nums.as_slice()) {
            ("bernoulli", [p]) => Arm::Bernoulli(*p),
            ("gaussian", [mean, sd]) => Arm::Gaussian { mean: *mean, sd: *sd },
            _ => return Err(Error::invalid(format!("arm `{s}` should look like bernoulli:p or gaussian:mu,sigma"))),
        };
        arm.validate()?;
        Ok(arm)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Bernoulli(p) => write!(f, "bernoulli:{p}"),
            Arm::Gaussian { mean, sd } => write!(f, "gaussian:{mean},{sd}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnv {
    arms: Vec<Arm>,
}

impl BanditEnv {
    pub fn new(arms: Vec<Arm>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::invalid("bandit needs at least one arm"));
        }
        for a in &arms {
            a.validate()?;
        }
        Ok(Self { arms })
    }

    pub fn bernoulli(ps: &[f64]) -> Result<Self> {
        Self::new(ps.iter().map(|p| Arm::Bernoulli(*p)).collect())
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(Arm::mean).collect()
    }

    pub fn max_mean(&self) -> f64 {
        self.arms.iter().map(Arm::mean).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample(&self, arm: usize, rng: &mut SimRng) -> f64 {
        self.arms[arm].sample(rng)
    }
}

/// Hoeffding-case width ψ*⁻¹(y) = √(y/2), from ψ(λ) = λ²/8.
pub fn hoeffding_width(y: f64) -> f64 {
    (y / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct UcbConfig {
    pub alpha: f64,
    /// ψ*⁻¹, nonnegative and nondecreasing on [0, ∞).
    pub width: fn(f64) -> f64,
}

impl Default for UcbConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            width: hoeffding_width,
        }
    }
}

impl UcbConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { alpha, ..Self::default() })
    }

    /// μ̂ + ψ*⁻¹(α log t / n) for an arm pulled `count > 0` times.
    pub fn index(&self, mean: f64, count: u64, t: u64) -> f64 {
        mean + self.bonus(count, t)
    }

    pub fn bonus(&self, count: u64, t: u64) -> f64 {
        (self.width)(self.alpha * (t as f64).ln() / count as f64)
    }
}

/// Sufficient statistic of the learner at iteration t, plus the reward the
/// environment produced for the current arm (the adversary intercepts it
/// before the learner sees it).
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
    pub current_arm: Option<usize>,
    /// 1-based iteration counter.
    pub t: u64,
    pub reward: Option<f64>,
}

impl BanditState {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![0; k],
            means: vec![0.0; k],
            current_arm: None,
            t: 1,
            reward: None,
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total_pulls(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Folds `reward` into `arm`'s statistics and advances t.
    pub fn observe(&mut self, arm: usize, reward: f64) {
        let (m, c) = mean_update(self.means[arm], self.counts[arm], reward);
        self.means[arm] = m;
        self.counts[arm] = c;
        self.t += 1;
    }
}

/// Arm chosen at iteration `state.t`: the lowest-index unpulled arm if any,
/// otherwise the UCB argmax with ties to the lowest index.
pub fn ucb_select_arm(state: &BanditState, config: &UcbConfig) -> Result<usize> {
    if state.k() == 0 {
        return Err(Error::invalid("bandit has no arms"));
    }
    if state.t == 0 {
        return Err(Error::invalid("iteration counter starts at 1"));
    }
    if let Some(i) = state.counts.iter().position(|c| *c == 0) {
        return Ok(i);
    }
    let mut best = 0;
    let mut best_index = f64::NEG_INFINITY;
    for (i, (m, c)) in state.means.iter().zip(&state.counts).enumerate() {
        let idx = config.index(*m, *c, state.t);
        if idx > best_index {
            best_index = idx;
            best = i;
        }
    }
    Ok(best)
}

/// Empirical-mean update (μ̂·n + r) / (n + 1).
///
/// μ̂·n is only known to within its rounding error; when that interval holds an
/// integer the running sum is taken to be that integer. Folding integer
/// rewards one at a time then reproduces the batch mean bit for bit, and other
/// inputs move by no more than the rounding error already present.
pub fn mean_update(mean: f64, count: u64, reward: f64) -> (f64, u64) {
    if count == 0 {
        return (reward, 1);
    }
    let n = count as f64;
    let product = mean * n;
    let slack = 0.5 * n * ulp(mean) + 0.5 * ulp(product);
    let nearest = product.round();
    let sum = if product.abs() < 9.0e15 && (product - nearest).abs() <= slack {
        nearest
    } else {
        product
    };
    ((sum + reward) / (n + 1.0), count + 1)
}

fn ulp(x: f64) -> f64 {
    let a = x.abs();
    a.next_up() - a
}

/// Realized pseudo-regret Σ_t (μ^max − μ_{I_t}).
pub fn pseudo_regret(pulls: &[usize], env: &BanditEnv) -> Result<f64> {
    let best = env.max_mean();
    let means = env.means();
    pulls
        .iter()
        .map(|&i| {
            means
                .get(i)
                .map(|m| best - m)
                .ok_or_else(|| Error::invalid(format!("arm index {i} out of range for k = {}", env.k())))
        })
        .sum()
}

/// The bandit learner and its environment as a plant. The scalar control is
/// the additive reward perturbation u_t; costs are zero (attack problems wrap
/// the plant and add their own).
#[derive(Debug, Clone)]
pub struct BanditPlant {
    pub env: BanditEnv,
    pub config: UcbConfig,
    unconstrained: ControlSet,
}

impl BanditPlant {
    pub fn new(env: BanditEnv, config: UcbConfig) -> Self {
        Self {
            env,
            config,
            unconstrained: ControlSet::Unconstrained,
        }
    }

    /// s_1: no pulls yet, I_1 chosen, its reward drawn.
    pub fn initial_state(&self, rng: &mut SimRng) -> Result<BanditState> {
        let mut s = BanditState::new(self.env.k());
        let arm = ucb_select_arm(&s, &self.config)?;
        s.current_arm = Some(arm);
        s.reward = Some(self.env.sample(arm, rng));
        Ok(s)
    }

    /// s_{t+1} = f(s_t, u_t): feed r + u to the learner, choose I_{t+1} and draw its reward.
    pub fn transition(&self, state: &BanditState, shaping: f64, rng: &mut SimRng) -> Result<BanditState> {
        let (Some(arm), Some(r)) = (state.current_arm, state.reward) else {
            return Err(Error::invalid("bandit state has no pending pull; start from initial_state"));
        };
        let mut next = state.clone();
        next.observe(arm, r + shaping);
        let arm = ucb_select_arm(&next, &self.config)?;
        next.current_arm = Some(arm);
        next.reward = Some(self.env.sample(arm, rng));
        Ok(next)
    }
}

impl ControlProblem for BanditPlant {
    type State = BanditState;

    fn horizon(&self) -> Horizon {
        Horizon::Open
    }

    fn control_dim(&self, _step: usize) -> usize {
        1
    }

    fn constraint(&self, _step: usize) -> &ControlSet {
        &self.unconstrained
    }

    fn dynamics(&self, state: &BanditState, control: &[f64], _step: usize, rng: &mut SimRng) -> Result<BanditState> {
        self.transition(state, control[0], rng)
    }

    fn running_cost(&self, _: &BanditState, _: &[f64], _: usize) -> f64 {
        0.0
    }

    fn terminal_cost(&self, _: &BanditState) -> f64 {
        0.0
    }
}
