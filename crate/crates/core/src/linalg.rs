//! Dense vector helpers and the p-norm family used for distances and margins.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A p-norm with p ∈ {1, 2, ∞}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
    LInf,
}

impl Norm {
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::LInf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    /// The dual norm q with 1/p + 1/q = 1.
    pub fn dual(self) -> Norm {
        match self {
            Norm::L1 => Norm::LInf,
            Norm::L2 => Norm::L2,
            Norm::LInf => Norm::L1,
        }
    }

    /// A subgradient of ‖v‖, taken as 0 at v = 0 and at the first maximal
    /// coordinate for ∞-norm ties.
    pub fn gradient(self, v: &[f64]) -> Vec<f64> {
        let sgn = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
        match self {
            Norm::L1 => v.iter().map(|x| sgn(*x)).collect(),
            Norm::L2 => {
                let n = Norm::L2.eval(v);
                if n == 0.0 {
                    vec![0.0; v.len()]
                } else {
                    v.iter().map(|x| x / n).collect()
                }
            }
            Norm::LInf => {
                let mut g = vec![0.0; v.len()];
                let mut best: Option<usize> = None;
                for (j, x) in v.iter().enumerate() {
                    if x.abs() > best.map_or(0.0, |b| v[b].abs()) {
                        best = Some(j);
                    }
                }
                if let Some(j) = best {
                    g[j] = sgn(v[j]);
                }
                g
            }
        }
    }

    /// Unit-norm direction `d` maximizing `w·d`, so that `w·d = ‖w‖_q`.
    pub fn steepest_direction(self, w: &[f64]) -> Vec<f64> {
        match self {
            Norm::L2 => {
                let n = Norm::L2.eval(w);
                w.iter().map(|x| x / n).collect()
            }
            Norm::LInf => w.iter().map(|x| sign(*x)).collect(),
            Norm::L1 => {
                let mut best = 0;
                for (j, x) in w.iter().enumerate() {
                    if x.abs() > w[best].abs() {
                        best = j;
                    }
                }
                let mut d = vec![0.0; w.len()];
                d[best] = sign(w[best]);
                d
            }
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::LInf => "linf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" | "euclidean" => Ok(Norm::L2),
            "inf" | "linf" | "infinity" | "max" => Ok(Norm::LInf),
            other => Err(Error::invalid(format!(
                "unknown norm `{other}` (expected l1, l2 or linf)"
            ))),
        }
    }
}

/// sign with sign(0) = +1.
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_and_duals() {
        let v = [3.0, -4.0];
        assert_eq!(Norm::L1.eval(&v), 7.0);
        assert_eq!(Norm::L2.eval(&v), 5.0);
        assert_eq!(Norm::LInf.eval(&v), 4.0);
        assert_eq!(Norm::L1.dual(), Norm::LInf);
        for p in [Norm::L1, Norm::L2, Norm::LInf] {
            let d = p.steepest_direction(&v);
            assert!((p.eval(&d) - 1.0).abs() < 1e-12);
            assert!((dot(&v, &d) - p.dual().eval(&v)).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }

    #[test]
    fn parse_norm() {
        assert_eq!("L2".parse::<Norm>().unwrap(), Norm::L2);
        assert_eq!("inf".parse::<Norm>().unwrap(), Norm::LInf);
        assert!("l3".parse::<Norm>().is_err());
    }
}
