//! Discrete-time control problems: dynamics, running and terminal costs,
//! per-step control constraint sets, and rollouts.
//!
//! A problem is evaluated by rolling a control sequence through its dynamics
//! from a given initial state:
//!
//! ```text
//! x_{t+1} = f(x_t, u_t, t, rng)        u_t ∈ U_t
//! J(u)    = g_T(x_T) + Σ_{t<T} g_t(x_t, u_t)
//! ```
//!
//! Costs are nonnegative and may be `+∞`, which encodes a hard constraint.
//! `f64::INFINITY` already propagates through sums and loses every comparison
//! with a finite value, so it is used directly as the infeasible cost.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Norm};

/// One control input u_t.
pub type Control = Vec<f64>;

/// The randomness source handed to stochastic dynamics.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    /// No fixed horizon and no terminal cost; any number of steps may be rolled out.
    Open,
}

impl Horizon {
    pub fn finite(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(Horizon::Finite(steps))
    }

    pub fn steps(self) -> Option<usize> {
        match self {
            Horizon::Finite(t) => Some(t),
            Horizon::Open => None,
        }
    }
}

/// Axis-aligned box `lower ≤ u ≤ upper`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::invalid(format!(
                    "box bound {j}: lower {l} exceeds upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn clamp(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, h))| x.clamp(*l, *h))
            .collect()
    }
}

/// Half-space `normal·u ≤ offset`, optionally intersected with a box.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub bounds: Option<BoxSet>,
}

impl HalfSpace {
    fn tolerance(&self, u: &[f64]) -> f64 {
        1e-12 * (1.0 + self.offset.abs() + Norm::L2.eval(&self.normal) * Norm::L2.eval(u))
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        if u.len() != self.normal.len() {
            return false;
        }
        if let Some(b) = &self.bounds {
            if !b.contains(u) {
                return false;
            }
        }
        dot(&self.normal, u) <= self.offset + self.tolerance(u)
    }

    fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let a = &self.normal;
        let Some(bounds) = &self.bounds else {
            let excess = dot(a, v) - self.offset;
            if excess <= 0.0 {
                return Ok(v.to_vec());
            }
            let nn = dot(a, a);
            if nn == 0.0 {
                return Err(Error::EmptyConstraintSet(format!(
                    "0·u ≤ {} has no solution",
                    self.offset
                )));
            }
            return Ok(v.iter().zip(a).map(|(x, aj)| x - excess / nn * aj).collect());
        };

        // The projection is clamp(v − νa) for the smallest ν ≥ 0 meeting the
        // half-space; a·clamp(v − νa) is nonincreasing in ν.
        let at = |nu: f64| -> Vec<f64> {
            let shifted: Vec<f64> = v.iter().zip(a).map(|(x, aj)| x - nu * aj).collect();
            bounds.clamp(&shifted)
        };
        let start = at(0.0);
        if dot(a, &start) <= self.offset {
            return Ok(start);
        }
        let lowest: f64 = a
            .iter()
            .zip(bounds.lower().iter().zip(bounds.upper()))
            .map(|(aj, (l, h))| if *aj > 0.0 { aj * l } else if *aj < 0.0 { aj * h } else { 0.0 })
            .sum();
        if lowest > self.offset {
            return Err(Error::EmptyConstraintSet(format!(
                "box and half-space do not intersect (min a·u = {lowest} > {})",
                self.offset
            )));
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while dot(a, &at(hi)) > self.offset {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::EmptyConstraintSet("half-space bracket diverged".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dot(a, &at(mid)) > self.offset {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(at(hi))
    }
}

/// Per-step control constraint set U_t.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ControlSet {
    #[default]
    Unconstrained,
    Box(BoxSet),
    Finite(Vec<Control>),
    HalfSpace(HalfSpace),
}

impl ControlSet {
    pub fn contains(&self, u: &[f64]) -> bool {
        if u.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match self {
            ControlSet::Unconstrained => true,
            ControlSet::Box(b) => b.contains(u),
            ControlSet::Finite(cands) => cands.iter().any(|c| c.as_slice() == u),
            ControlSet::HalfSpace(h) => h.contains(u),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            ControlSet::Unconstrained => None,
            ControlSet::Box(b) => Some(b.dim()),
            ControlSet::Finite(c) => c.first().map(Vec::len),
            ControlSet::HalfSpace(h) => Some(h.normal.len()),
        }
    }
}

/// Nearest feasible control in Euclidean distance.
///
/// Boxes clamp componentwise. Finite sets return the nearest candidate, the
/// first listed on ties. Half-spaces project orthogonally. The unconstrained
/// set leaves `u` as is.
pub fn project_control(set: &ControlSet, u: &[f64]) -> Result<Control> {
    if let Some(d) = set.dim() {
        crate::linalg::check_dim(d, u.len())?;
    }
    match set {
        ControlSet::Unconstrained => Ok(u.to_vec()),
        ControlSet::Box(b) => Ok(b.clamp(u)),
        ControlSet::Finite(cands) => {
            let mut best: Option<(f64, &Control)> = None;
            for c in cands {
                crate::linalg::check_dim(u.len(), c.len())?;
                let d = Norm::L2.distance(c, u);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
            best.map(|(_, c)| c.clone()).ok_or(Error::EmptyCandidateSet)
        }
        ControlSet::HalfSpace(h) => {
            if h.contains(u) {
                Ok(u.to_vec())
            } else {
                h.project(u)
            }
        }
    }
}

/// A discrete-time optimal control problem.
///
/// Implementations must be pure: the same state, control, step and rng
/// stream always produce the same successor and costs.
pub trait ControlProblem: Sync {
    type State: Clone + Send + Sync;

    fn horizon(&self) -> Horizon;

    /// Dimension of u_t.
    fn control_dim(&self, step: usize) -> usize;

    fn constraint(&self, step: usize) -> &ControlSet;

    fn dynamics(
        &self,
        state: &Self::State,
        control: &[f64],
        step: usize,
        rng: &mut SimRng,
    ) -> Result<Self::State>;

    fn running_cost(&self, state: &Self::State, control: &[f64], step: usize) -> f64;

    fn terminal_cost(&self, state: &Self::State) -> f64;

    /// False when any cost is an indicator or otherwise has no useful gradient.
    fn is_smooth(&self) -> bool {
        true
    }

    /// Analytic gradient of the objective with respect to every control, when
    /// the problem can provide one.
    fn objective_gradient(&self, _x0: &Self::State, _controls: &[Control]) -> Option<Vec<Control>> {
        None
    }
}

/// Realized rollout of a control sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub controls: Vec<Control>,
    pub step_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub total_cost: f64,
}

impl<S: Clone> Trajectory<S> {
    pub fn final_state(&self) -> &S {
        self.states.last().expect("trajectory always holds x_0")
    }

    pub fn running_cost(&self) -> f64 {
        self.step_costs.iter().sum()
    }

    /// Joins two segments where `next` starts from this segment's final state.
    /// The terminal cost is taken from `next`.
    pub fn concat(mut self, next: Trajectory<S>) -> Trajectory<S> {
        self.states.extend(next.states.into_iter().skip(1));
        self.controls.extend(next.controls);
        self.step_costs.extend(next.step_costs);
        self.terminal_cost = next.terminal_cost;
        self.total_cost = sum_costs(&self.step_costs, self.terminal_cost);
        self
    }
}

fn sum_costs(step_costs: &[f64], terminal: f64) -> f64 {
    terminal + step_costs.iter().sum::<f64>()
}

/// g_T(x_T) + Σ g_t(x_t, u_t) of a completed trajectory.
pub fn objective<S>(trajectory: &Trajectory<S>) -> f64 {
    sum_costs(&trajectory.step_costs, trajectory.terminal_cost)
}

fn check_cost(step: usize, value: f64) -> Result<f64> {
    if value.is_nan() || value < 0.0 {
        Err(Error::InvalidCost { step, value })
    } else {
        Ok(value)
    }
}

fn check_control<P: ControlProblem>(problem: &P, u: &[f64], step: usize) -> Result<()> {
    crate::linalg::check_dim(problem.control_dim(step), u.len())?;
    if !problem.constraint(step).contains(u) {
        return Err(Error::ConstraintViolation { step });
    }
    Ok(())
}

fn run<P: ControlProblem>(
    problem: &P,
    controls: &[Control],
    x0: &P::State,
    start: usize,
    rng: &mut SimRng,
    checked: bool,
) -> Result<Trajectory<P::State>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut step_costs = Vec::with_capacity(controls.len());
    states.push(x0.clone());
    for (i, u) in controls.iter().enumerate() {
        let t = start + i;
        if checked {
            check_control(problem, u, t)?;
        } else {
            crate::linalg::check_dim(problem.control_dim(t), u.len())?;
        }
        let x = states.last().expect("nonempty");
        step_costs.push(check_cost(t, problem.running_cost(x, u, t))?);
        let next = problem.dynamics(x, u, t, rng)?;
        states.push(next);
    }
    let terminal_cost = match problem.horizon() {
        Horizon::Finite(_) => check_cost(start + controls.len(), problem.terminal_cost(states.last().expect("nonempty")))?,
        Horizon::Open => 0.0,
    };
    let total_cost = sum_costs(&step_costs, terminal_cost);
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
        step_costs,
        terminal_cost,
        total_cost,
    })
}

/// Rolls `controls` through the dynamics from `x0`, with `seed` driving any
/// stochastic transitions.
///
/// For a finite horizon the control count must equal T. Each control must
/// already lie in its constraint set; project first.
pub fn rollout<P: ControlProblem>(
    problem: &P,
    controls: &[Control],
    x0: &P::State,
    seed: u64,
) -> Result<Trajectory<P::State>> {
    if let Horizon::Finite(t) = problem.horizon() {
        if controls.len() != t {
            return Err(Error::HorizonMismatch {
                expected: t,
                got: controls.len(),
            });
        }
    }
    run(problem, controls, x0, 0, &mut seeded_rng(seed), true)
}

/// Rolls out a segment starting at step `start`, drawing randomness from `rng`.
pub fn rollout_segment<P: ControlProblem>(
    problem: &P,
    controls: &[Control],
    x0: &P::State,
    start: usize,
    rng: &mut SimRng,
) -> Result<Trajectory<P::State>> {
    if let Horizon::Finite(t) = problem.horizon() {
        if start + controls.len() > t {
            return Err(Error::HorizonMismatch {
                expected: t.saturating_sub(start),
                got: controls.len(),
            });
        }
    }
    run(problem, controls, x0, start, rng, true)
}

/// Objective of a control sequence without constraint checks. Used by solvers
/// to probe finite-difference neighbours that may sit just outside U_t.
pub(crate) fn evaluate_unchecked<P: ControlProblem>(
    problem: &P,
    controls: &[Control],
    x0: &P::State,
    seed: u64,
) -> Result<f64> {
    run(problem, controls, x0, 0, &mut seeded_rng(seed), false).map(|t| t.total_cost)
}

/// A feedback policy φ_t(x_t) = u_t.
pub trait Policy<S> {
    fn act(&mut self, state: &S, step: usize) -> Result<Control>;
}

/// Closed-loop rollout: each control is chosen by `policy` from the current state.
pub fn rollout_policy<P, Q>(
    problem: &P,
    policy: &mut Q,
    x0: &P::State,
    steps: usize,
    rng: &mut SimRng,
) -> Result<Trajectory<P::State>>
where
    P: ControlProblem,
    Q: Policy<P::State>,
{
    if let Horizon::Finite(t) = problem.horizon() {
        if steps != t {
            return Err(Error::HorizonMismatch { expected: t, got: steps });
        }
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut step_costs = Vec::with_capacity(steps);
    states.push(x0.clone());
    for t in 0..steps {
        let x = states.last().expect("nonempty");
        let u = policy.act(x, t)?;
        check_control(problem, &u, t)?;
        step_costs.push(check_cost(t, problem.running_cost(x, &u, t))?);
        let next = problem.dynamics(x, &u, t, rng)?;
        states.push(next);
        controls.push(u);
    }
    let terminal_cost = match problem.horizon() {
        Horizon::Finite(_) => check_cost(steps, problem.terminal_cost(states.last().expect("nonempty")))?,
        Horizon::Open => 0.0,
    };
    let total_cost = sum_costs(&step_costs, terminal_cost);
    Ok(Trajectory {
        states,
        controls,
        step_costs,
        terminal_cost,
        total_cost,
    })
}

type DynamicsFn<S> = dyn Fn(&S, &[f64], usize, &mut SimRng) -> S + Send + Sync;
type RunningFn<S> = dyn Fn(&S, &[f64], usize) -> f64 + Send + Sync;
type TerminalFn<S> = dyn Fn(&S) -> f64 + Send + Sync;

/// A control problem assembled from closures.
pub struct FnProblem<S> {
    horizon: Horizon,
    control_dim: usize,
    constraint: ControlSet,
    dynamics: Box<DynamicsFn<S>>,
    running: Box<RunningFn<S>>,
    terminal: Box<TerminalFn<S>>,
    smooth: bool,
}

impl<S> FnProblem<S> {
    /// Zero costs and no constraint until set.
    pub fn new(
        horizon: Horizon,
        control_dim: usize,
        dynamics: impl Fn(&S, &[f64], usize, &mut SimRng) -> S + Send + Sync + 'static,
    ) -> Self {
        Self {
            horizon,
            control_dim,
            constraint: ControlSet::Unconstrained,
            dynamics: Box::new(dynamics),
            running: Box::new(|_, _, _| 0.0),
            terminal: Box::new(|_| 0.0),
            smooth: true,
        }
    }

    pub fn with_running_cost(mut self, g: impl Fn(&S, &[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        self.running = Box::new(g);
        self
    }

    pub fn with_terminal_cost(mut self, g: impl Fn(&S) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Box::new(g);
        self
    }

    pub fn with_constraint(mut self, set: ControlSet) -> Self {
        self.constraint = set;
        self
    }

    pub fn nonsmooth(mut self) -> Self {
        self.smooth = false;
        self
    }
}

impl<S: Clone + Send + Sync> ControlProblem for FnProblem<S> {
    type State = S;

    fn horizon(&self) -> Horizon {
        self.horizon
    }

    fn control_dim(&self, _step: usize) -> usize {
        self.control_dim
    }

    fn constraint(&self, _step: usize) -> &ControlSet {
        &self.constraint
    }

    fn dynamics(&self, state: &S, control: &[f64], step: usize, rng: &mut SimRng) -> Result<S> {
        Ok((self.dynamics)(state, control, step, rng))
    }

    fn running_cost(&self, state: &S, control: &[f64], step: usize) -> f64 {
        (self.running)(state, control, step)
    }

    fn terminal_cost(&self, state: &S) -> f64 {
        (self.terminal)(state)
    }

    fn is_smooth(&self) -> bool {
        self.smooth
    }
}
