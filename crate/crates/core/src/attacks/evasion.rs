//! Test-time evasion: the smallest perturbation of x that flips a linear
//! model's prediction, crossing the boundary by a score margin τ.

use crate::control::{project_control, BoxSet, ControlSet, FnProblem, HalfSpace, Horizon, SimRng};
use crate::error::{Error, Result};
use crate::learners::LinearModel;
use crate::linalg::{dot, sign, Norm};

/// Flip half-space a·x' ≤ c with a = sign(s)·w, c = −τ − sign(s)·b, where
/// s = w·x + b. Points in it have score −sign(s)·τ or beyond.
fn flip_halfspace(model: &LinearModel, x: &[f64], tau: f64) -> Result<(Vec<f64>, f64)> {
    crate::linalg::check_dim(model.dim(), x.len())?;
    if model.is_zero() {
        return Err(Error::ZeroModel);
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
    }
    let sg = sign(model.score(x));
    Ok((model.weights.iter().map(|w| sg * w).collect(), -tau - sg * model.bias))
}

/// Minimal-distance x' with predict(x') ≠ predict(x) and score at least τ past
/// the boundary, inside `bounds` when given.
///
/// Unboxed cases are closed form; for p = 2 this is
/// x' = x − (s + sign(s)τ)/‖w‖² · w. Boxed cases are solved exactly: p = 2 by
/// projection onto box ∩ half-space, p = 1 by filling the coordinates with the
/// largest |w_j| first, p = ∞ by the smallest uniform step that suffices.
pub fn testtime_attack(model: &LinearModel, x: &[f64], distance: Norm, bounds: Option<&BoxSet>, tau: f64) -> Result<Vec<f64>> {
    let (a, c) = flip_halfspace(model, x, tau)?;
    let need = dot(&a, x) - c;
    let out = match bounds {
        None => match distance {
            Norm::L2 => {
                let s = model.score(x);
                let k = (s + sign(s) * tau) / dot(&model.weights, &model.weights);
                x.iter().zip(&model.weights).map(|(xi, wi)| xi - k * wi).collect()
            }
            Norm::L1 => {
                let j = (0..a.len()).fold(0, |b, j| if a[j].abs() > a[b].abs() { j } else { b });
                let mut out = x.to_vec();
                out[j] -= need / a[j];
                out
            }
            Norm::LInf => {
                let l1 = Norm::L1.eval(&a);
                x.iter().zip(&a).map(|(xi, aj)| xi - need / l1 * unit(*aj)).collect()
            }
        },
        Some(b) => {
            crate::linalg::check_dim(x.len(), b.dim())?;
            if !b.contains(x) {
                return Err(Error::invalid("item lies outside the feature box"));
            }
            let room: Vec<f64> = (0..x.len())
                .map(|j| if a[j] > 0.0 { x[j] - b.lower()[j] } else if a[j] < 0.0 { b.upper()[j] - x[j] } else { 0.0 })
                .collect();
            let capacity: f64 = a.iter().zip(&room).map(|(aj, r)| aj.abs() * r).sum();
            if capacity < need {
                return Err(Error::Infeasible(format!(
                    "the feature box allows a score change of {capacity}, {need} is needed"
                )));
            }
            match distance {
                Norm::L2 => {
                    let set = ControlSet::HalfSpace(HalfSpace {
                        normal: a.clone(),
                        offset: c,
                        bounds: Some(b.clone()),
                    });
                    project_control(&set, x)?
                }
                Norm::L1 => {
                    let mut order: Vec<usize> = (0..x.len()).filter(|j| a[*j] != 0.0).collect();
                    order.sort_by(|i, j| a[*j].abs().total_cmp(&a[*i].abs()).then(i.cmp(j)));
                    let mut out = x.to_vec();
                    let mut left = need;
                    for j in order {
                        if left <= 0.0 {
                            break;
                        }
                        let cap = a[j].abs() * room[j];
                        if left >= cap {
                            out[j] = edge(b, j, a[j]);
                            left -= cap;
                        } else {
                            out[j] -= unit(a[j]) * left / a[j].abs();
                            left = 0.0;
                        }
                    }
                    out
                }
                Norm::LInf => {
                    let t = uniform_step(&a, &room, need);
                    (0..x.len())
                        .map(|j| if a[j] != 0.0 && t >= room[j] { edge(b, j, a[j]) } else { x[j] - unit(a[j]) * t })
                        .collect()
                }
            }
        }
    };
    if model.predict(&out) == model.predict(x) {
        return Err(Error::Infeasible("rounding left the item on its side of the boundary".into()));
    }
    Ok(out)
}

/// The face of the box a step against `a_j` runs into.
fn edge(b: &BoxSet, j: usize, aj: f64) -> f64 {
    if aj > 0.0 {
        b.lower()[j]
    } else {
        b.upper()[j]
    }
}

fn unit(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Smallest t with Σ|a_j|·min(t, room_j) ≥ need, walking the breakpoints.
fn uniform_step(a: &[f64], room: &[f64], need: f64) -> f64 {
    let mut active: Vec<(f64, f64)> = a
        .iter()
        .zip(room)
        .filter(|(aj, _)| **aj != 0.0)
        .map(|(aj, r)| (*r, aj.abs()))
        .collect();
    active.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut slope: f64 = active.iter().map(|(_, w)| w).sum();
    let mut done = 0.0;
    let mut at = 0.0;
    for (r, w) in active {
        let gain = slope * (r - at);
        if done + gain >= need {
            break;
        }
        done += gain;
        at = r;
        slope -= w;
    }
    at + (need - done) / slope
}

/// Evasion as a smooth one-step problem for generic solvers. The control u is
/// the perturbation with cost g_0 = ‖u‖₂². U_0 is the flip half-space,
/// intersected with the shifted box when given.
pub fn evasion_problem(model: &LinearModel, x: &[f64], tau: f64, bounds: Option<&BoxSet>) -> Result<FnProblem<Vec<f64>>> {
    let (a, c) = flip_halfspace(model, x, tau)?;
    let shifted = match bounds {
        Some(b) => {
            crate::linalg::check_dim(x.len(), b.dim())?;
            Some(BoxSet::new(
                crate::linalg::sub(b.lower(), x),
                crate::linalg::sub(b.upper(), x),
            )?)
        }
        None => None,
    };
    let set = ControlSet::HalfSpace(HalfSpace {
        offset: c - dot(&a, x),
        normal: a,
        bounds: shifted,
    });
    Ok(FnProblem::new(Horizon::Finite(1), x.len(), |x: &Vec<f64>, u: &[f64], _, _: &mut SimRng| {
        x.iter().zip(u).map(|(a, b)| a + b).collect()
    })
    .with_running_cost(|_, u, _| dot(u, u))
    .with_constraint(set))
}

/// Evasion with the goal as a terminal indicator: g_0 = ‖u‖_p and
/// g_1 = 0 if the prediction flipped by margin τ, else ∞.
pub fn evasion_indicator_problem(model: &LinearModel, x: &[f64], distance: Norm, tau: f64) -> Result<FnProblem<Vec<f64>>> {
    let (a, c) = flip_halfspace(model, x, tau)?;
    Ok(FnProblem::new(Horizon::Finite(1), x.len(), |x: &Vec<f64>, u: &[f64], _, _: &mut SimRng| {
        x.iter().zip(u).map(|(a, b)| a + b).collect()
    })
    .with_running_cost(move |_, u, _| distance.eval(u))
    .with_terminal_cost(move |x| if dot(&a, x) <= c { 0.0 } else { f64::INFINITY })
    .nonsmooth())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{rollout, seeded_rng};
    use crate::solvers::{grid_search, projected_gradient, GridAxis, PgOptions};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn closed_form_example() {
        let m = LinearModel::new(vec![1.0, 0.0]);
        let x2 = testtime_attack(&m, &[2.0, 0.0], Norm::L2, None, 0.01).unwrap();
        assert!((x2[0] + 0.01).abs() < 1e-15 && x2[1] == 0.0);
        assert!((Norm::L2.distance(&x2, &[2.0, 0.0]) - 2.01).abs() < 1e-12);
        assert_eq!(m.predict(&x2), -1);
    }

    #[test]
    fn boundary_point_is_pushed_by_tau() {
        let w = [1.0, 0.0];
        let m = LinearModel::with_bias(w.to_vec(), -2.0);
        let x = [2.0, 3.0];
        assert_eq!(m.score(&x), 0.0);
        let tau = 1e-3;
        let out = testtime_attack(&m, &x, Norm::L2, None, tau).unwrap();
        for j in 0..2 {
            assert!((out[j] - (x[j] - tau * w[j])).abs() < 1e-15);
        }
        assert_eq!(m.predict(&out), -1);
    }

    #[test]
    fn rejects_zero_model_and_bad_tau() {
        assert_eq!(
            testtime_attack(&LinearModel::zeros(2), &[1.0, 1.0], Norm::L2, None, 0.1).unwrap_err(),
            Error::ZeroModel
        );
        assert!(testtime_attack(&LinearModel::new(vec![1.0]), &[1.0], Norm::L2, None, 0.0).is_err());
    }

    #[test]
    fn infeasible_box() {
        let m = LinearModel::new(vec![1.0, 1.0]);
        let b = BoxSet::uniform(2, 0.0, 1.0).unwrap();
        for p in [Norm::L1, Norm::L2, Norm::LInf] {
            assert!(matches!(
                testtime_attack(&m, &[0.5, 0.5], p, Some(&b), 0.01),
                Err(Error::Infeasible(_))
            ));
        }
    }

    #[test]
    fn boxed_norms_by_hand() {
        // s = x1 + 2·x2 − 1 = 0.5 at (0.5, 0.5); need 0.5 + τ.
        let m = LinearModel::with_bias(vec![1.0, 2.0], -1.0);
        let b = BoxSet::uniform(2, 0.0, 1.0).unwrap();
        let x = [0.5, 0.5];
        let tau = 0.1;
        // L1 spends on x2 first: room 0.5 gives 1.0 ≥ 0.6.
        let l1 = testtime_attack(&m, &x, Norm::L1, Some(&b), tau).unwrap();
        assert!((l1[0] - 0.5).abs() < 1e-12 && (l1[1] - 0.2).abs() < 1e-12);
        // L∞: uniform step t with 3t = 0.6.
        let li = testtime_attack(&m, &x, Norm::LInf, Some(&b), tau).unwrap();
        assert!((li[0] - 0.3).abs() < 1e-12 && (li[1] - 0.3).abs() < 1e-12);
        // With a tight upper room the L∞ step saturates x2 first.
        let m = LinearModel::with_bias(vec![1.0, 2.0], -0.5);
        let x = [0.9, 0.1];
        let li = testtime_attack(&m, &x, Norm::LInf, Some(&b), 0.01).unwrap();
        assert_eq!(li[1], 0.0);
        assert!((m.score(&li) + 0.01).abs() < 1e-12);
    }

    #[test]
    fn pg_recovers_closed_form() {
        let mut rng = seeded_rng(11);
        for _ in 0..20 {
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = LinearModel::with_bias(w, rng.random_range(-0.5..0.5));
            let closed = testtime_attack(&m, &x, Norm::L2, None, 0.01).unwrap();
            let p = evasion_problem(&m, &x, 0.01, None).unwrap();
            let init: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r = projected_gradient(&p, &x, &[init], &PgOptions { step_size: 0.25, ..PgOptions::default() }).unwrap();
            let d_pg = r.best_objective.sqrt();
            assert!((d_pg - Norm::L2.distance(&closed, &x)).abs() < 1e-4);
        }
    }

    #[test]
    fn grid_matches_closed_form_in_one_dimension() {
        let m = LinearModel::with_bias(vec![1.5], -0.3);
        let x = [0.7];
        let closed = testtime_attack(&m, &x, Norm::L2, None, 0.01).unwrap();
        let p = evasion_indicator_problem(&m, &x, Norm::L2, 0.01).unwrap();
        let r = grid_search(&p, &x.to_vec(), &[GridAxis::span(-3.0, 3.0, 1e-3).unwrap()], 0).unwrap();
        assert!((r.best_objective - (closed[0] - x[0]).abs()).abs() < 1e-3);
        let again = rollout(&p, &r.best_controls, &x.to_vec(), 0).unwrap();
        assert_eq!(again.total_cost, r.best_objective);
    }

    proptest! {
        #[test]
        fn flips_and_respects_box(
            w in prop::collection::vec(-2.0f64..2.0, 3),
            bias in -1.0f64..1.0,
            x in prop::collection::vec(0.0f64..1.0, 3),
            tau in 1e-4f64..0.2,
            p in 0usize..3,
        ) {
            let m = LinearModel::with_bias(w, bias);
            prop_assume!(!m.is_zero());
            let norm = [Norm::L1, Norm::L2, Norm::LInf][p];
            let b = BoxSet::uniform(3, 0.0, 1.0).unwrap();
            match testtime_attack(&m, &x, norm, Some(&b), tau) {
                Ok(out) => {
                    prop_assert_ne!(m.predict(&out), m.predict(&x));
                    prop_assert!(b.contains(&out));
                    // A smaller margin never needs a longer move.
                    let shorter = testtime_attack(&m, &x, norm, Some(&b), tau / 2.0).unwrap();
                    prop_assert!(norm.distance(&shorter, &x) <= norm.distance(&out, &x) + 1e-12);
                }
                Err(e) => prop_assert!(matches!(e, Error::Infeasible(_))),
            }
            let free = testtime_attack(&m, &x, norm, None, tau).unwrap();
            prop_assert_ne!(m.predict(&free), m.predict(&x));
        }
    }
}
