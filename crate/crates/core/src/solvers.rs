//! Optimizers over open-loop control sequences. Exhaustive grid search is the
//! oracle. Projected gradient differentiates through the unrolled dynamics;
//! the cross-entropy method handles non-smooth costs.
//!
//! All solvers flatten u_0..u_{T-1} into one vector, evaluate candidates by
//! full rollouts, and keep the best candidate seen. Reported objectives are
//! the rollout values themselves, so re-rolling `best_controls` reproduces
//! `best_objective` exactly.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::control::{evaluate_unchecked, project_control, rollout, seeded_rng, Control, ControlProblem};
use crate::error::{Error, Result};
use crate::harness::fmt_real;

pub const GRID_LIMIT: u128 = 10_000_000;
pub const PG_STEP_CAP: usize = 10_000;
pub const CEM_STD_FLOOR: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    OptimalOnGrid,
    Converged,
    IterationCapped,
    Infeasible,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::OptimalOnGrid => "optimal-on-grid",
            SolverStatus::Converged => "converged",
            SolverStatus::IterationCapped => "iteration-capped",
            SolverStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub best_controls: Vec<Control>,
    pub best_objective: f64,
    /// Number of rollouts performed.
    pub evaluations: u64,
    pub status: SolverStatus,
    pub seed: u64,
}

impl SolverReport {
    /// Flat `key = value` block for logs.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "status = {}", self.status);
        let _ = writeln!(out, "best_objective = {}", fmt_real(self.best_objective));
        let _ = writeln!(out, "evaluations = {}", self.evaluations);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "horizon = {}", self.best_controls.len());
        for (t, u) in self.best_controls.iter().enumerate() {
            let vals: Vec<String> = u.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(out, "control.{t} = {}", vals.join(","));
        }
        out
    }

    fn finish(mut self) -> Self {
        if !self.best_objective.is_finite() {
            self.status = SolverStatus::Infeasible;
        }
        self
    }
}

/// Per-step control dimensions over the finite horizon.
fn layout<P: ControlProblem>(problem: &P) -> Result<Vec<usize>> {
    let steps = problem
        .horizon()
        .steps()
        .ok_or_else(|| Error::invalid("solvers need a finite horizon"))?;
    Ok((0..steps).map(|t| problem.control_dim(t)).collect())
}

fn unflatten(flat: &[f64], dims: &[usize]) -> Vec<Control> {
    let mut out = Vec::with_capacity(dims.len());
    let mut at = 0;
    for d in dims {
        out.push(flat[at..at + d].to_vec());
        at += d;
    }
    out
}

fn flatten(controls: &[Control]) -> Vec<f64> {
    controls.iter().flatten().copied().collect()
}

/// Points along one flattened control coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum GridAxis {
    /// `start + i·step` for `i < count`.
    Range { start: f64, step: f64, count: usize },
    Values(Vec<f64>),
}

impl GridAxis {
    /// Lattice from `lo` to `hi` inclusive (up to rounding) with spacing `step`.
    pub fn span(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) {
            return Err(Error::invalid(format!("bad grid span [{lo}, {hi}] step {step}")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok(GridAxis::Range { start: lo, step, count })
    }

    pub fn len(&self) -> usize {
        match self {
            GridAxis::Range { count, .. } => *count,
            GridAxis::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> f64 {
        match self {
            GridAxis::Range { start, step, .. } => start + i as f64 * step,
            GridAxis::Values(v) => v[i],
        }
    }
}

/// Exact minimizer over the Cartesian grid, ties to the lexicographically
/// first point (the first axis varies slowest).
pub fn grid_search<P: ControlProblem>(
    problem: &P,
    x0: &P::State,
    axes: &[GridAxis],
    seed: u64,
) -> Result<SolverReport> {
    let dims = layout(problem)?;
    let total_dim: usize = dims.iter().sum();
    crate::linalg::check_dim(total_dim, axes.len())?;
    let count = axes.iter().try_fold(1u128, |acc, a| {
        let next = acc * a.len() as u128;
        (next <= GRID_LIMIT).then_some(next).ok_or(next)
    });
    let count = match count {
        Ok(c) => c,
        Err(_) => {
            let exact = axes.iter().map(|a| a.len() as u128).fold(1u128, |a, b| a.saturating_mul(b));
            return Err(Error::GridTooLarge {
                count: exact,
                limit: GRID_LIMIT,
            });
        }
    };
    if count == 0 {
        return Err(Error::invalid("grid has an empty axis"));
    }
    let point = |mut idx: u64| -> Vec<f64> {
        let mut flat = vec![0.0; axes.len()];
        for (j, axis) in axes.iter().enumerate().rev() {
            let n = axis.len() as u64;
            flat[j] = axis.point((idx % n) as usize);
            idx /= n;
        }
        flat
    };
    let best = (0..count as u64)
        .into_par_iter()
        .map(|idx| {
            let controls = unflatten(&point(idx), &dims);
            rollout(problem, &controls, x0, seed).map(|t| (t.total_cost, idx))
        })
        .try_reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| Ok(if lexi_less(b, a) { b } else { a }),
        )?;
    // Every point may be infeasible; report the first one then.
    let idx = if best.1 == u64::MAX { 0 } else { best.1 };
    Ok(SolverReport {
        best_controls: unflatten(&point(idx), &dims),
        best_objective: best.0,
        evaluations: count as u64,
        status: SolverStatus::OptimalOnGrid,
        seed,
    }
    .finish())
}

fn lexi_less(a: (f64, u64), b: (f64, u64)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => a.1 < b.1,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOptions {
    pub steps: usize,
    pub step_size: f64,
    pub fd_step: f64,
    /// Use the problem's analytic gradient when it offers one.
    pub analytic: bool,
    /// Halve the step until the objective strictly decreases, so iterates
    /// settle onto kinks instead of bouncing across them.
    pub backtracking: bool,
    pub seed: u64,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            step_size: 0.1,
            fd_step: DEFAULT_FD_STEP,
            analytic: false,
            backtracking: true,
            seed: 0,
        }
    }
}

const MAX_HALVINGS: usize = 50;

/// Central finite-difference gradient of the objective through full rollouts.
pub fn fd_gradient<P: ControlProblem>(
    problem: &P,
    x0: &P::State,
    controls: &[Control],
    h: f64,
    seed: u64,
) -> Result<Vec<Control>> {
    let dims: Vec<usize> = controls.iter().map(Vec::len).collect();
    let base = flatten(controls);
    let grad = (0..base.len())
        .into_par_iter()
        .map(|j| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[j] += h;
            minus[j] -= h;
            let fp = evaluate_unchecked(problem, &unflatten(&plus, &dims), x0, seed)?;
            let fm = evaluate_unchecked(problem, &unflatten(&minus, &dims), x0, seed)?;
            Ok((fp - fm) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(unflatten(&grad, &dims))
}

fn project_all<P: ControlProblem>(problem: &P, controls: &[Control]) -> Result<Vec<Control>> {
    controls
        .iter()
        .enumerate()
        .map(|(t, u)| project_control(problem.constraint(t), u))
        .collect()
}

/// Projected gradient descent u ← Π(u − step·∇J(u)), returning the best iterate.
///
/// Refuses problems with non-smooth costs. Stops early once an update moves
/// no coordinate by more than 1e-8 (with backtracking: once no step of at
/// least that size decreases the objective).
pub fn projected_gradient<P: ControlProblem>(
    problem: &P,
    x0: &P::State,
    init: &[Control],
    options: &PgOptions,
) -> Result<SolverReport> {
    if !problem.is_smooth() {
        return Err(Error::NonSmooth);
    }
    if !(options.step_size > 0.0) || !(options.fd_step > 0.0) {
        return Err(Error::invalid("step size and finite-difference step must be positive"));
    }
    let dims = layout(problem)?;
    crate::linalg::check_dim(dims.len(), init.len())?;
    let seed = options.seed;
    let mut u = project_all(problem, init)?;
    let mut value = rollout(problem, &u, x0, seed)?.total_cost;
    if !value.is_finite() {
        return Err(Error::InfeasibleInit);
    }
    let mut evaluations = 1u64;
    let mut best = (value, u.clone());
    let mut status = SolverStatus::IterationCapped;
    for _ in 0..options.steps.min(PG_STEP_CAP) {
        let grad = match options.analytic.then(|| problem.objective_gradient(x0, &u)).flatten() {
            Some(g) => g,
            None => {
                evaluations += 2 * dims.iter().sum::<usize>() as u64;
                fd_gradient(problem, x0, &u, options.fd_step, seed)?
            }
        };
        if grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gradient is not finite"));
        }
        let mut alpha = options.step_size;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let stepped: Vec<Control> = u
                .iter()
                .zip(&grad)
                .map(|(ut, gt)| ut.iter().zip(gt).map(|(a, g)| a - alpha * g).collect())
                .collect();
            let next = project_all(problem, &stepped)?;
            let moved = u
                .iter()
                .flatten()
                .zip(next.iter().flatten())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if moved < 1e-8 {
                break;
            }
            let next_value = rollout(problem, &next, x0, seed)?.total_cost;
            evaluations += 1;
            if !options.backtracking || next_value < value {
                u = next;
                value = next_value;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if value < best.0 {
            best = (value, u.clone());
        }
        if !accepted {
            status = SolverStatus::Converged;
            break;
        }
    }
    Ok(SolverReport {
        best_controls: best.1,
        best_objective: best.0,
        evaluations,
        status,
        seed,
    }
    .finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOptions {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Initial sampling mean; zeros (projected) when absent.
    pub init_mean: Option<Vec<Control>>,
    pub init_std: f64,
}

impl Default for CemOptions {
    fn default() -> Self {
        Self {
            population: 100,
            elite_fraction: 0.1,
            iterations: 50,
            seed: 0,
            init_mean: None,
            init_std: 5.0,
        }
    }
}

/// Cross-entropy method: sample Gaussian control sequences, project them into
/// the constraint sets, refit mean and per-coordinate std to the elites.
/// Deterministic given the seed; returns the best sample ever evaluated.
pub fn cross_entropy<P: ControlProblem>(
    problem: &P,
    x0: &P::State,
    options: &CemOptions,
) -> Result<SolverReport> {
    if options.population < 10 {
        return Err(Error::invalid(format!("population must be >= 10, got {}", options.population)));
    }
    if !(options.elite_fraction > 0.0 && options.elite_fraction <= 0.5) {
        return Err(Error::invalid(format!(
            "elite fraction must be in (0, 0.5], got {}",
            options.elite_fraction
        )));
    }
    if !(options.init_std > 0.0 && options.init_std.is_finite()) {
        return Err(Error::invalid(format!("initial std must be > 0, got {}", options.init_std)));
    }
    let dims = layout(problem)?;
    let total: usize = dims.iter().sum();
    let seed = options.seed;
    let start = match &options.init_mean {
        Some(m) => {
            crate::linalg::check_dim(dims.len(), m.len())?;
            m.clone()
        }
        None => dims.iter().map(|d| vec![0.0; *d]).collect(),
    };
    let start = project_all(problem, &start)?;
    let mut mean = flatten(&start);
    crate::linalg::check_dim(total, mean.len())?;
    let mut std = vec![options.init_std; total];
    let n_elite = ((options.population as f64 * options.elite_fraction).ceil() as usize).max(2);

    let mut best = (rollout(problem, &start, x0, seed)?.total_cost, start);
    let mut evaluations = 1u64;
    let mut rng = seeded_rng(seed);
    let mut status = SolverStatus::IterationCapped;
    for _ in 0..options.iterations {
        let samples: Vec<Vec<Control>> = (0..options.population)
            .map(|_| {
                let flat: Vec<f64> = mean
                    .iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + s * z
                    })
                    .collect();
                project_all(problem, &unflatten(&flat, &dims))
            })
            .collect::<Result<_>>()?;
        let mut scored = samples
            .par_iter()
            .enumerate()
            .map(|(i, c)| rollout(problem, c, x0, seed).map(|t| (t.total_cost, i)))
            .collect::<Result<Vec<_>>>()?;
        evaluations += options.population as u64;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if scored[0].0 < best.0 {
            best = (scored[0].0, samples[scored[0].1].clone());
        }
        let elites: Vec<Vec<f64>> = scored[..n_elite].iter().map(|(_, i)| flatten(&samples[*i])).collect();
        for j in 0..total {
            let m = elites.iter().map(|e| e[j]).sum::<f64>() / n_elite as f64;
            let var = elites.iter().map(|e| (e[j] - m) * (e[j] - m)).sum::<f64>() / n_elite as f64;
            mean[j] = m;
            std[j] = var.sqrt().max(CEM_STD_FLOOR);
        }
        if std.iter().all(|s| *s <= CEM_STD_FLOOR) {
            status = SolverStatus::Converged;
            break;
        }
    }
    Ok(SolverReport {
        best_controls: best.1,
        best_objective: best.0,
        evaluations,
        status,
        seed,
    }
    .finish())
}
