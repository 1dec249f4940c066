//! Flat `section.key = value` configuration files and their typed form.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::{AttackGoal, BatchSurface, Distance, SolverChoice};
use crate::bandit::{Arm, BanditEnv, UcbConfig};
use crate::control::BoxSet;
use crate::defense::DefenseConfig;
use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, LearningRate, LinearModel, Loss};
use crate::linalg::Norm;
use crate::solvers::{CemOptions, PgOptions};

/// The five experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    PoisonBatch,
    PoisonSeq,
    Evade,
    Defend,
    ShapeRewards,
}

impl Kind {
    pub const ALL: [Kind; 5] = [
        Kind::PoisonBatch,
        Kind::PoisonSeq,
        Kind::Evade,
        Kind::Defend,
        Kind::ShapeRewards,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::PoisonBatch => "poison-batch",
            Kind::PoisonSeq => "poison-seq",
            Kind::Evade => "evade",
            Kind::Defend => "defend",
            Kind::ShapeRewards => "shape-rewards",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL.into_iter().find(|k| k.name() == s.trim()).ok_or_else(|| {
            let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
            Error::invalid(format!("unknown experiment kind `{}` (valid kinds: {})", s.trim(), names.join(", ")))
        })
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key-value pairs with lookup tracking, so unread keys can be flagged.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    base_dir: Option<PathBuf>,
    used: RefCell<BTreeSet<String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `section.key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || !key.contains('.') || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line,
                    message: format!("key `{key}` must look like `section.key`"),
                });
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
        }
        Ok(Self {
            entries,
            ..Self::default()
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut raw = Self::parse(&text)?;
        raw.base_dir = path.parent().map(Path::to_path_buf);
        Ok(raw)
    }

    fn get(&self, key: &str) -> Option<&str> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e.value.as_str())
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| field(key, "missing required field"))
    }

    fn parse_as<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| field(key, format!("cannot parse `{v}`: {e}"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse_as(key)?.unwrap_or(default))
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parse_as(key)?.ok_or_else(|| field(key, "missing required field"))
    }

    fn reals(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    fn req_reals(&self, key: &str) -> Result<Vec<f64>> {
        self.reals(key)?.ok_or_else(|| field(key, "missing required field"))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(v) => Err(field(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect()
    }

    /// Whether the file pins a kind with `experiment.kind`.
    pub fn declares_kind(&self) -> bool {
        self.entries.contains_key("experiment.kind")
    }

    /// Kind sections present in the file.
    pub fn sections(&self) -> Vec<Kind> {
        Kind::ALL
            .into_iter()
            .filter(|k| !self.keys_with_prefix(&format!("{k}.")).is_empty())
            .collect()
    }

    fn check_unused(&self, prefixes: &[String]) -> Result<()> {
        let used = self.used.borrow();
        for key in self.entries.keys() {
            if prefixes.iter().any(|p| key.starts_with(p.as_str())) && !used.contains(key) {
                return Err(field(key, "unknown key"));
            }
        }
        Ok(())
    }
}

fn field(key: &str, msg: impl fmt::Display) -> Error {
    Error::invalid(format!("{key}: {msg}"))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| field(key, format!("`{}` is not a finite real", s.trim())))
        })
        .collect()
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    /// `two-cluster:N`: 2-D Gaussian clusters, N points per class.
    TwoCluster(usize),
    /// `line:N`: N points x ~ N(0, 1) in 1-D labelled by sign(x).
    Line(usize),
}

impl DataSource {
    fn parse(key: &str, v: &str, base: Option<&Path>) -> Result<Self> {
        let (kind, arg) = v.split_once(':').ok_or_else(|| field(key, "expected `file:PATH`, `two-cluster:N` or `line:N`"))?;
        let count = || -> Result<usize> {
            arg.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| field(key, format!("`{arg}` is not a positive count")))
        };
        match kind.trim() {
            "file" => {
                let p = PathBuf::from(arg.trim());
                Ok(DataSource::File(match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                }))
            }
            "two-cluster" => Ok(DataSource::TwoCluster(count()?)),
            "line" => Ok(DataSource::Line(count()?)),
            other => Err(field(key, format!("unknown data source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchScenario {
    pub data: DataSource,
    pub learner: LearnerConfig,
    pub goal: AttackGoal,
    pub surface: BatchSurface,
    pub distance: Distance,
    pub effort_weight: f64,
    pub solver: SolverChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialScenario {
    pub data: DataSource,
    pub learner: LearnerConfig,
    pub goal: AttackGoal,
    pub distance: Distance,
    pub effort_weight: f64,
    pub horizon: usize,
    pub w0: Option<LinearModel>,
    pub bounds: Option<BoxSet>,
    pub solver: SolverChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvasionScenario {
    pub data: DataSource,
    pub model: LinearModel,
    pub norm: Norm,
    pub tau: f64,
    pub bounds: Option<BoxSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseScenario {
    pub data: DataSource,
    pub h0: LinearModel,
    pub config: DefenseConfig,
}

#[derive(Debug, Clone)]
pub struct ShapingScenario {
    pub env: BanditEnv,
    pub goal: AttackGoal,
    pub ucb: UcbConfig,
    pub horizon: usize,
    pub delta: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    PoisonBatch(BatchScenario),
    PoisonSeq(SequentialScenario),
    Evade(EvasionScenario),
    Defend(DefenseScenario),
    ShapeRewards(ShapingScenario),
}

impl Scenario {
    pub fn kind(&self) -> Kind {
        match self {
            Scenario::PoisonBatch(_) => Kind::PoisonBatch,
            Scenario::PoisonSeq(_) => Kind::PoisonSeq,
            Scenario::Evade(_) => Kind::Evade,
            Scenario::Defend(_) => Kind::Defend,
            Scenario::ShapeRewards(_) => Kind::ShapeRewards,
        }
    }
}

/// A validated experiment: its scenario and the seeds to run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// Builds the experiment for `kind`, or for `experiment.kind` when `kind`
    /// is `None`. Unknown keys in the `experiment` section or the chosen
    /// kind's section are rejected.
    pub fn from_raw(raw: &RawConfig, kind: Option<Kind>) -> Result<Self> {
        let kind = match (kind, raw.parse_as::<Kind>("experiment.kind")?) {
            (Some(k), Some(c)) if k != c => {
                return Err(field("experiment.kind", format!("config names `{c}` but `{k}` was requested")))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(field("experiment.kind", "missing required field")),
        };
        let seeds = match raw.get("experiment.seeds") {
            Some(v) => {
                let seeds = v
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().map_err(|_| field("experiment.seeds", format!("`{}` is not a seed", s.trim()))))
                    .collect::<Result<Vec<_>>>()?;
                if seeds.is_empty() {
                    return Err(field("experiment.seeds", "at least one seed is needed"));
                }
                seeds
            }
            None => vec![0],
        };
        let output = raw.get("experiment.output").map(|o| {
            let p = PathBuf::from(o);
            match &raw.base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        });
        let record_wall_time = raw.flag("experiment.record_wall_time", false)?;
        let s = format!("{kind}.");
        let scenario = match kind {
            Kind::PoisonBatch => Scenario::PoisonBatch(batch(raw, &s)?),
            Kind::PoisonSeq => Scenario::PoisonSeq(sequential(raw, &s)?),
            Kind::Evade => Scenario::Evade(evasion(raw, &s)?),
            Kind::Defend => Scenario::Defend(defense(raw, &s)?),
            Kind::ShapeRewards => Scenario::ShapeRewards(shaping(raw, &s)?),
        };
        raw.check_unused(&["experiment.".to_string(), s])?;
        Ok(Self {
            scenario,
            seeds,
            output,
            record_wall_time,
        })
    }

    pub fn kind(&self) -> Kind {
        self.scenario.kind()
    }
}

fn data(raw: &RawConfig, s: &str) -> Result<DataSource> {
    let key = format!("{s}data");
    DataSource::parse(&key, raw.required(&key)?, raw.base_dir.as_deref())
}

fn learner(raw: &RawConfig, s: &str) -> Result<LearnerConfig> {
    let d = LearnerConfig::default();
    let rate_key = format!("{s}learner.rate");
    let rate = match raw.get(&rate_key) {
        None => d.rate,
        Some(v) => {
            let (kind, eta) = v.split_once(':').ok_or_else(|| field(&rate_key, "expected `constant:ETA` or `inverse-time:ETA`"))?;
            let eta: f64 = eta.trim().parse().map_err(|_| field(&rate_key, format!("`{eta}` is not a real")))?;
            match kind.trim() {
                "constant" => LearningRate::Constant(eta),
                "inverse-time" => LearningRate::InverseTime(eta),
                other => return Err(field(&rate_key, format!("unknown schedule `{other}`"))),
            }
        }
    };
    let cfg = LearnerConfig {
        lambda: raw.or(&format!("{s}learner.lambda"), d.lambda)?,
        rate,
        loss: raw.or::<Loss>(&format!("{s}learner.loss"), d.loss)?,
        fit_bias: raw.flag(&format!("{s}learner.fit_bias"), d.fit_bias)?,
    };
    cfg.validate().map_err(|e| field(&format!("{s}learner"), e))?;
    Ok(cfg)
}

fn model(raw: &RawConfig, weights_key: &str, bias_key: &str) -> Result<LinearModel> {
    Ok(LinearModel::with_bias(raw.req_reals(weights_key)?, raw.or(bias_key, 0.0)?))
}

fn goal(raw: &RawConfig, s: &str) -> Result<AttackGoal> {
    let key = format!("{s}goal");
    let k = |name: &str| format!("{s}goal.{name}");
    let g = match raw.required(&key)? {
        "exact-model" => AttackGoal::ExactModel {
            target: model(raw, &k("target"), &k("target_bias"))?,
        },
        "near-model" => AttackGoal::NearModel {
            target: model(raw, &k("target"), &k("target_bias"))?,
            norm: raw.or(&k("norm"), Norm::L2)?,
        },
        "target-set" => AttackGoal::target_set(raw.req_reals(&k("item"))?, raw.req(&k("epsilon"))?)
            .map_err(|e| field(&key, e))?,
        "target-arm" => {
            let arm: usize = raw.req(&k("arm"))?;
            if arm == 0 {
                return Err(field(&k("arm"), "arms are numbered from 1"));
            }
            AttackGoal::target_arm(arm - 1, raw.or(&k("lambda"), 1.0)?).map_err(|e| field(&key, e))?
        }
        other => {
            return Err(field(
                &key,
                format!("unsupported goal `{other}` (exact-model, near-model, target-set or target-arm)"),
            ))
        }
    };
    Ok(g)
}

fn solver(raw: &RawConfig, s: &str) -> Result<SolverChoice> {
    let key = format!("{s}solver");
    let k = |name: &str| format!("{s}solver.{name}");
    match raw.required(&key)? {
        "grid" => Ok(SolverChoice::Grid {
            step: raw.req(&k("step"))?,
        }),
        "projected-gradient" => {
            let d = PgOptions::default();
            Ok(SolverChoice::ProjectedGradient(PgOptions {
                steps: raw.or(&k("steps"), d.steps)?,
                step_size: raw.or(&k("step_size"), d.step_size)?,
                fd_step: raw.or(&k("fd_step"), d.fd_step)?,
                analytic: raw.flag(&k("analytic"), d.analytic)?,
                backtracking: raw.flag(&k("backtracking"), d.backtracking)?,
                seed: 0,
            }))
        }
        "cross-entropy" => {
            let d = CemOptions::default();
            Ok(SolverChoice::CrossEntropy(CemOptions {
                population: raw.or(&k("population"), d.population)?,
                elite_fraction: raw.or(&k("elite_fraction"), d.elite_fraction)?,
                iterations: raw.or(&k("iterations"), d.iterations)?,
                init_std: raw.or(&k("init_std"), d.init_std)?,
                seed: 0,
                init_mean: None,
            }))
        }
        other => Err(field(&key, format!("unknown solver `{other}` (grid, projected-gradient or cross-entropy)"))),
    }
}

fn bounds(raw: &RawConfig, lower: &str, upper: &str) -> Result<Option<BoxSet>> {
    match (raw.reals(lower)?, raw.reals(upper)?) {
        (None, None) => Ok(None),
        (Some(l), Some(u)) => BoxSet::new(l, u).map(Some).map_err(|e| field(lower, e)),
        (Some(_), None) => Err(field(upper, "missing; lower and upper come together")),
        (None, Some(_)) => Err(field(lower, "missing; lower and upper come together")),
    }
}

fn batch(raw: &RawConfig, s: &str) -> Result<BatchScenario> {
    let k = |name: &str| format!("{s}{name}");
    let surface = match raw.required(&k("attack.surface"))? {
        "label-flip" => BatchSurface::LabelFlip,
        "features" => {
            let editable = raw
                .reals(&k("attack.editable"))?
                .map(|v| {
                    v.iter()
                        .map(|i| {
                            if i.fract() != 0.0 || *i < 1.0 {
                                Err(field(&k("attack.editable"), "items are numbered from 1"))
                            } else {
                                Ok(*i as usize - 1)
                            }
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            BatchSurface::FeaturePerturbation {
                radius: raw.req(&k("attack.radius"))?,
                editable,
            }
        }
        other => return Err(field(&k("attack.surface"), format!("unknown surface `{other}` (label-flip or features)"))),
    };
    Ok(BatchScenario {
        data: data(raw, s)?,
        learner: learner(raw, s)?,
        goal: goal(raw, s)?,
        surface,
        distance: raw.or(&k("attack.distance"), Distance::SummedEuclidean)?,
        effort_weight: raw.or(&k("attack.effort_weight"), 1.0)?,
        solver: solver(raw, s)?,
    })
}

fn sequential(raw: &RawConfig, s: &str) -> Result<SequentialScenario> {
    let k = |name: &str| format!("{s}{name}");
    let horizon: usize = raw.req(&k("attack.horizon"))?;
    if horizon == 0 {
        return Err(field(&k("attack.horizon"), "must be at least 1"));
    }
    Ok(SequentialScenario {
        data: data(raw, s)?,
        learner: learner(raw, s)?,
        goal: goal(raw, s)?,
        distance: raw.or(&k("attack.distance"), Distance::SummedEuclidean)?,
        effort_weight: raw.or(&k("attack.effort_weight"), 1.0)?,
        horizon,
        w0: raw
            .reals(&k("attack.w0"))?
            .map(|w| Ok::<_, Error>(LinearModel::with_bias(w, raw.or(&k("attack.w0_bias"), 0.0)?)))
            .transpose()?,
        bounds: bounds(raw, &k("attack.lower"), &k("attack.upper"))?,
        solver: solver(raw, s)?,
    })
}

fn evasion(raw: &RawConfig, s: &str) -> Result<EvasionScenario> {
    let k = |name: &str| format!("{s}{name}");
    let tau: f64 = raw.or(&k("tau"), 0.01)?;
    if !(tau > 0.0) {
        return Err(field(&k("tau"), "must be > 0"));
    }
    let model = model(raw, &k("model"), &k("model_bias"))?;
    if model.is_zero() {
        return Err(field(&k("model"), "weight vector is zero"));
    }
    Ok(EvasionScenario {
        data: data(raw, s)?,
        model,
        norm: raw.or(&k("norm"), Norm::L2)?,
        tau,
        bounds: bounds(raw, &k("lower"), &k("upper"))?,
    })
}

fn defense(raw: &RawConfig, s: &str) -> Result<DefenseScenario> {
    let k = |name: &str| format!("{s}{name}");
    let d = DefenseConfig::default();
    let config = DefenseConfig {
        epsilon: raw.or(&k("epsilon"), d.epsilon)?,
        norm: raw.or(&k("norm"), d.norm)?,
        iterations: raw.or(&k("iterations"), d.iterations)?,
        eta: raw.or(&k("eta"), d.eta)?,
        lambda: raw.or(&k("lambda"), d.lambda)?,
        samples: raw.or(&k("samples"), d.samples)?,
        seed: 0,
    };
    config.validate().map_err(|e| field(s.trim_end_matches('.'), e))?;
    let h0 = model(raw, &k("h0"), &k("h0_bias"))?;
    if h0.is_zero() {
        return Err(field(&k("h0"), "weight vector is zero"));
    }
    Ok(DefenseScenario {
        data: data(raw, s)?,
        h0,
        config,
    })
}

fn shaping(raw: &RawConfig, s: &str) -> Result<ShapingScenario> {
    let k = |name: &str| format!("{s}{name}");
    let arm_keys = raw.keys_with_prefix(&k("arm."));
    let mut arms: Vec<(usize, Arm)> = Vec::new();
    for key in &arm_keys {
        let idx: usize = key[k("arm.").len()..]
            .parse()
            .ok()
            .filter(|i| *i >= 1)
            .ok_or_else(|| field(key, "arm keys are numbered from 1"))?;
        arms.push((idx, raw.req(key)?));
    }
    arms.sort_by_key(|(i, _)| *i);
    if arms.is_empty() {
        return Err(field(&k("arm.1"), "at least one arm is needed"));
    }
    for (pos, (i, _)) in arms.iter().enumerate() {
        if *i != pos + 1 {
            return Err(field(&k(&format!("arm.{}", pos + 1)), "arms must be numbered 1..k without gaps"));
        }
    }
    let env = BanditEnv::new(arms.into_iter().map(|(_, a)| a).collect()).map_err(|e| field(&k("arm"), e))?;
    let ucb = UcbConfig::new(raw.or(&k("alpha"), 2.0)?).map_err(|e| field(&k("alpha"), e))?;
    let goal = goal(raw, s)?;
    let horizon: usize = raw.req(&k("horizon"))?;
    match &goal {
        AttackGoal::TargetArm { arm, .. } if *arm >= env.k() => {
            return Err(field(&k("goal.arm"), format!("only {} arms are defined", env.k())))
        }
        AttackGoal::TargetArm { .. } => {}
        other => return Err(field(&k("goal"), format!("reward shaping needs target-arm, got `{}`", other.kind()))),
    }
    if horizon < env.k() {
        return Err(field(&k("horizon"), format!("must be at least the number of arms ({})", env.k())));
    }
    let delta: f64 = raw.or(&k("delta"), 0.01)?;
    if !(delta > 0.0) {
        return Err(field(&k("delta"), "must be > 0"));
    }
    Ok(ShapingScenario {
        env,
        goal,
        ucb,
        horizon,
        delta,
        enabled: raw.flag(&k("shaping"), true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: &str = "
        experiment.kind = shape-rewards   # trailing comment
        experiment.seeds = 0, 1
        shape-rewards.arm.1 = bernoulli:0.8
        shape-rewards.arm.2 = bernoulli:0.2
        shape-rewards.goal = target-arm
        shape-rewards.goal.arm = 2
        shape-rewards.horizon = 100
    ";

    #[test]
    fn parses_shaping_section() {
        let raw = RawConfig::parse(SHAPE).unwrap();
        let cfg = ExperimentConfig::from_raw(&raw, None).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1]);
        let Scenario::ShapeRewards(s) = cfg.scenario else { panic!() };
        assert_eq!(s.env.k(), 2);
        assert_eq!(s.goal, AttackGoal::TargetArm { arm: 1, lambda: 1.0 });
        assert!(s.enabled);
    }

    #[test]
    fn unknown_kind_lists_valid_kinds() {
        let raw = RawConfig::parse("experiment.kind = frobnicate").unwrap();
        let msg = ExperimentConfig::from_raw(&raw, None).unwrap_err().to_string();
        for k in Kind::ALL {
            assert!(msg.contains(k.name()), "{msg}");
        }
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SHAPE.replace("shape-rewards.horizon = 100", "shape-rewards.horizon = many");
        let msg = ExperimentConfig::from_raw(&RawConfig::parse(&bad).unwrap(), None).unwrap_err().to_string();
        assert!(msg.contains("shape-rewards.horizon"), "{msg}");
        let typo = format!("{SHAPE}\nshape-rewards.detla = 0.1");
        let msg = ExperimentConfig::from_raw(&RawConfig::parse(&typo).unwrap(), None).unwrap_err().to_string();
        assert!(msg.contains("shape-rewards.detla"), "{msg}");
        let missing = SHAPE.replace("shape-rewards.goal.arm = 2", "");
        let msg = ExperimentConfig::from_raw(&RawConfig::parse(&missing).unwrap(), None).unwrap_err().to_string();
        assert!(msg.contains("shape-rewards.goal.arm"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert_eq!(
            RawConfig::parse("a.b = 1\nno equals here").unwrap_err(),
            Error::Parse {
                line: 2,
                message: "expected `section.key = value`, got `no equals here`".into()
            }
        );
        assert!(matches!(RawConfig::parse("a.b = 1\na.b = 2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(RawConfig::parse("nosection = 1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn requested_kind_must_match_config() {
        let raw = RawConfig::parse(SHAPE).unwrap();
        assert!(ExperimentConfig::from_raw(&raw, Some(Kind::Defend)).is_err());
        assert_eq!(raw.sections(), vec![Kind::ShapeRewards]);
    }
}
