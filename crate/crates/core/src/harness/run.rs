//! Runs an experiment for each seed and writes per-seed and summary CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{
    BatchScenario, DataSource, DefenseScenario, EvasionScenario, ExperimentConfig, Kind, Scenario,
    SequentialScenario, ShapingScenario,
};
use super::fmt_real;
use crate::attacks::{batch_poison, sequential_poison, shape_rewards, testtime_attack, CleanReference, SolverChoice};
use crate::control::seeded_rng;
use crate::defense::{adversarial_training, two_cluster_toy};
use crate::error::{Error, Result};
use crate::learners::{Dataset, LabeledExample, LinearModel};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ENV: &str = "ADVCTL_OUT";

pub const SUMMARY_HEADER: &str =
    "kind,seed,objective,attack_cost,success,target_fraction,pseudo_regret,violation_rate_before,violation_rate_after";

/// One summary line. Fields that do not apply to a kind are `None` and print empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub kind: Kind,
    pub seed: u64,
    pub objective: f64,
    pub attack_cost: Option<f64>,
    pub success: bool,
    pub target_fraction: Option<f64>,
    pub pseudo_regret: Option<f64>,
    pub violation_rate_before: Option<f64>,
    pub violation_rate_after: Option<f64>,
    pub wall_time_s: Option<f64>,
}

impl SummaryRow {
    fn new(kind: Kind, seed: u64, objective: f64, success: bool) -> Self {
        Self {
            kind,
            seed,
            objective,
            attack_cost: None,
            success,
            target_fraction: None,
            pseudo_regret: None,
            violation_rate_before: None,
            violation_rate_after: None,
            wall_time_s: None,
        }
    }

    fn csv_line(&self, wall_time: bool) -> String {
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{}",
            self.kind,
            self.seed,
            fmt_real(self.objective),
            opt(self.attack_cost),
            self.success,
            opt(self.target_fraction),
            opt(self.pseudo_regret),
            opt(self.violation_rate_before),
            opt(self.violation_rate_after),
        );
        if wall_time {
            line.push(',');
            line.push_str(&opt(self.wall_time_s));
        }
        line
    }
}

/// Everything one seed produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub row: SummaryRow,
    /// File name (relative to the kind directory) and contents.
    pub files: Vec<(String, String)>,
    /// The goal could not be met for this seed.
    pub infeasible: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub kind: Kind,
    pub rows: Vec<SummaryRow>,
    /// Directory holding the per-seed files and `summary.csv`.
    pub dir: PathBuf,
    pub infeasible: bool,
}

/// Output directory: the explicit override, then `ADVCTL_OUT`, then the
/// config's `experiment.output`, then `out`.
pub fn resolve_output_dir(explicit: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Renders the summary CSV for `rows`.
pub fn summary_csv(rows: &[SummaryRow], wall_time: bool) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    if wall_time {
        out.push_str(",wall_time_s");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line(wall_time));
        out.push('\n');
    }
    out
}

/// Runs every seed (concurrently) and writes `<out>/<kind>/seed<k>.csv`,
/// any companion files, and `<out>/<kind>/summary.csv`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let outcomes = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = config.record_wall_time.then(Instant::now);
            let mut o = run_seed(config, seed)?;
            o.row.wall_time_s = start.map(|s| s.elapsed().as_secs_f64());
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = out.join(config.kind().name());
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    for o in &outcomes {
        for (name, contents) in &o.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        }
    }
    let rows: Vec<SummaryRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary_csv(&rows, config.record_wall_time)).map_err(|e| io_error(&path, e))?;
    Ok(RunSummary {
        kind: config.kind(),
        rows,
        dir,
        infeasible: outcomes.iter().any(|o| o.infeasible),
    })
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::invalid(format!("cannot write {}: {e}", path.display()))
}

/// Runs one seed without touching the disk.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    match &config.scenario {
        Scenario::PoisonBatch(s) => run_batch(s, seed),
        Scenario::PoisonSeq(s) => run_sequential(s, seed),
        Scenario::Evade(s) => run_evasion(s, seed),
        Scenario::Defend(s) => run_defense(s, seed),
        Scenario::ShapeRewards(s) => run_shaping(s, seed),
    }
}

/// Materializes a data source; synthetic generators draw from `seed`.
pub fn load_data(source: &DataSource, seed: u64) -> Result<Dataset> {
    match source {
        DataSource::File(p) => Dataset::load(p),
        DataSource::TwoCluster(n) => Ok(two_cluster_toy(*n, seed)),
        DataSource::Line(n) => {
            let mut rng = seeded_rng(seed);
            let examples = (0..*n)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    LabeledExample::new(vec![x], if x >= 0.0 { 1 } else { -1 })
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(examples)
        }
    }
}

fn seeded_solver(solver: &SolverChoice, seed: u64) -> SolverChoice {
    let mut s = solver.clone();
    match &mut s {
        SolverChoice::Grid { .. } => {}
        SolverChoice::ProjectedGradient(o) => o.seed = seed,
        SolverChoice::CrossEntropy(o) => o.seed = seed,
    }
    s
}

fn feature_header(prefix: &str, d: usize) -> String {
    (1..=d).map(|j| format!(",{prefix}{j}")).collect()
}

fn push_reals(line: &mut String, xs: &[f64]) {
    for x in xs {
        let _ = write!(line, ",{}", fmt_real(*x));
    }
}

fn run_batch(s: &BatchScenario, seed: u64) -> Result<SeedOutcome> {
    let data = load_data(&s.data, seed)?;
    let clean = CleanReference::new(data, s.distance)?.with_effort_weight(s.effort_weight)?;
    let res = batch_poison(&clean, &s.goal, &s.learner, &s.surface, &seeded_solver(&s.solver, seed))?;
    let d = clean.data.dim();
    let mut csv = format!("item{},y{},clean_y\n", feature_header("x", d), feature_header("clean_x", d));
    for (i, (p, c)) in res.dataset.iter().zip(clean.data.iter()).enumerate() {
        let mut line = (i + 1).to_string();
        push_reals(&mut line, &p.features);
        let _ = write!(line, ",{}", p.label);
        push_reals(&mut line, &c.features);
        let _ = writeln!(line, ",{}", c.label);
        csv.push_str(&line);
    }
    let mut row = SummaryRow::new(Kind::PoisonBatch, seed, res.trajectory.total_cost, res.feasible);
    row.attack_cost = Some(res.trajectory.running_cost());
    Ok(SeedOutcome {
        row,
        files: vec![
            (format!("seed{seed}.csv"), csv),
            (format!("seed{seed}.data"), res.dataset.to_text()),
            (format!("seed{seed}.report"), res.report.to_kv()),
        ],
        infeasible: !res.feasible,
    })
}

fn run_sequential(s: &SequentialScenario, seed: u64) -> Result<SeedOutcome> {
    let data = load_data(&s.data, seed)?;
    let clean = CleanReference::new(data, s.distance)?.with_effort_weight(s.effort_weight)?;
    let d = clean.data.dim();
    let w0 = s.w0.clone().unwrap_or_else(|| LinearModel::zeros(d));
    let res = sequential_poison(
        &clean,
        &s.goal,
        &s.learner,
        &w0,
        s.horizon,
        &seeded_solver(&s.solver, seed),
        s.bounds.as_ref(),
    )?;
    let mut csv = format!("t{},y{},b,step_cost\n", feature_header("x", d), feature_header("w", d));
    for (t, item) in res.items.iter().enumerate() {
        let w = &res.trajectory.states[t + 1];
        let mut line = (t + 1).to_string();
        push_reals(&mut line, &item.features);
        let _ = write!(line, ",{}", item.label);
        push_reals(&mut line, &w.weights);
        let _ = writeln!(line, ",{},{}", fmt_real(w.bias), fmt_real(res.trajectory.step_costs[t]));
        csv.push_str(&line);
    }
    let mut row = SummaryRow::new(Kind::PoisonSeq, seed, res.trajectory.total_cost, res.feasible);
    row.attack_cost = Some(res.trajectory.running_cost());
    Ok(SeedOutcome {
        row,
        files: vec![
            (format!("seed{seed}.csv"), csv),
            (format!("seed{seed}.report"), res.report.to_kv()),
        ],
        infeasible: !res.feasible,
    })
}

fn run_evasion(s: &EvasionScenario, seed: u64) -> Result<SeedOutcome> {
    let data = load_data(&s.data, seed)?;
    let d = data.dim();
    crate::linalg::check_dim(s.model.dim(), d)?;
    let mut csv = format!("item,prediction{}{},distance,flipped\n", feature_header("x", d), feature_header("adv_x", d));
    let mut total = 0.0;
    let mut all = true;
    for (i, item) in data.iter().enumerate() {
        let mut line = format!("{},{}", i + 1, s.model.predict(&item.features));
        push_reals(&mut line, &item.features);
        match testtime_attack(&s.model, &item.features, s.norm, s.bounds.as_ref(), s.tau) {
            Ok(adv) => {
                let dist = s.norm.distance(&adv, &item.features);
                total += dist;
                push_reals(&mut line, &adv);
                let _ = writeln!(line, ",{},true", fmt_real(dist));
            }
            Err(Error::Infeasible(_)) => {
                all = false;
                line.push_str(&",".repeat(d));
                line.push_str(",,false\n");
            }
            Err(e) => return Err(e),
        }
        csv.push_str(&line);
    }
    let mut row = SummaryRow::new(Kind::Evade, seed, total, all);
    row.attack_cost = Some(total);
    Ok(SeedOutcome {
        row,
        files: vec![(format!("seed{seed}.csv"), csv)],
        infeasible: !all,
    })
}

fn run_defense(s: &DefenseScenario, seed: u64) -> Result<SeedOutcome> {
    let data = load_data(&s.data, seed)?;
    let config = crate::defense::DefenseConfig { seed, ..s.config.clone() };
    let run = adversarial_training(&s.h0, &data, &config)?;
    let success = run.final_rate < run.initial_rate || run.final_rate == 0.0;
    let mut row = SummaryRow::new(Kind::Defend, seed, run.running_cost, success);
    row.violation_rate_before = Some(run.initial_rate);
    row.violation_rate_after = Some(run.final_rate);
    Ok(SeedOutcome {
        row,
        files: vec![(format!("seed{seed}.csv"), run.audit_csv())],
        infeasible: false,
    })
}

fn run_shaping(s: &ShapingScenario, seed: u64) -> Result<SeedOutcome> {
    let run = shape_rewards(&s.env, &s.goal, &s.ucb, s.horizon, s.delta, seed, s.enabled)?;
    let mut row = SummaryRow::new(Kind::ShapeRewards, seed, run.total_cost, run.target_fraction > 0.5);
    row.attack_cost = Some(run.total_shaping_effort());
    row.target_fraction = Some(run.target_fraction);
    row.pseudo_regret = Some(run.pseudo_regret);
    Ok(SeedOutcome {
        row,
        files: vec![(format!("seed{seed}.csv"), run.to_csv())],
        infeasible: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RawConfig;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_raw(&RawConfig::parse(text).unwrap(), None).unwrap()
    }

    #[test]
    fn line_source_is_seeded() {
        let a = load_data(&DataSource::Line(5), 3).unwrap();
        assert_eq!(a, load_data(&DataSource::Line(5), 3).unwrap());
        assert_ne!(a, load_data(&DataSource::Line(5), 4).unwrap());
        assert!(a.iter().all(|e| (e.features[0] >= 0.0) == (e.label == 1)));
    }

    #[test]
    fn seeds_are_independent_of_fan_out() {
        let cfg = config(
            "experiment.kind = defend
             experiment.seeds = 0,1,2
             defend.data = two-cluster:10
             defend.h0 = 0.3, 0.05",
        );
        let dir = std::env::temp_dir().join(format!("advctl-run-{}", std::process::id()));
        let summary = run_experiment(&cfg, &dir).unwrap();
        for (row, seed) in summary.rows.iter().zip([0, 1, 2]) {
            assert_eq!(*row, run_seed(&cfg, seed).unwrap().row);
        }
        let text = std::fs::read_to_string(summary.dir.join("summary.csv")).unwrap();
        assert!(text.starts_with(SUMMARY_HEADER));
        assert_eq!(text.lines().count(), 4);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn wall_time_column_is_opt_in() {
        let row = SummaryRow::new(Kind::Evade, 0, 1.5, true);
        assert_eq!(row.csv_line(false), "evade,0,1.5,,true,,,,");
        assert_eq!(summary_csv(&[row], true).lines().next().unwrap(), format!("{SUMMARY_HEADER},wall_time_s"));
    }

    #[test]
    fn infeasible_evasion_is_flagged() {
        let cfg = config(
            "experiment.kind = evade
             evade.data = line:4
             evade.model = 1
             evade.model_bias = -10
             evade.lower = -5
             evade.upper = 5",
        );
        let o = run_seed(&cfg, 0).unwrap();
        assert!(o.infeasible && !o.row.success);
        assert_eq!(o.row.objective, 0.0);
        assert!(o.files[0].1.lines().skip(1).all(|l| l.ends_with(",,false")));
    }
}
