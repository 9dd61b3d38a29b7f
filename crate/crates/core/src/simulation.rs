//! Monte Carlo comparison of the π₀ estimators on synthetic segmented
//! exponential data.
//!
//! Each replication draws a θ per segment (θ = 1 for nulls), simulates n
//! lifetimes per segment, runs the configured test, estimates π₀ four ways,
//! and scores adaptive BH with each estimate against the non-adaptive
//! procedure. Replication r always uses substream (seed, "rep", r), so
//! results do not depend on the thread count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive_bh::{ConfusionCounts, bh_adjust, confusion, floor_pi0, reject_at};
use crate::dist::{sample_exponential, sample_truncated_exponential, sample_uniform};
use crate::error::{Error, Result};
use crate::estimators::{BootstrapScheme, Pi0Suite, estimate_all, sets_from_results};
use crate::lrt::{ModelCache, TestProblem, TestResult, lrt_one_sample, lrt_two_sample};
use crate::rng::{Stream, substream};

/// Estimators compared in the study, in reporting order.
pub const ESTIMATORS: [&str; 4] = ["bootstrap", "average", "U", "E"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Non-null θ uniform on (1, 1.5) or (0.5, 1).
    Uniform,
    /// Non-null θ from a mean-1 exponential truncated to (1, 1.5) or (0.5, 1).
    Exponential,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Uniform => "uniform",
            Setting::Exponential => "exponential",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Setting::Uniform),
            "exponential" => Ok(Setting::Exponential),
            _ => Err(Error::param(format!("unknown setting '{s}'"))),
        }
    }
}

/// Percentages of non-null segments with θ < 1 (left) and θ > 1 (right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub left: u32,
    pub right: u32,
}

impl Allocation {
    pub fn new(left: u32, right: u32) -> Result<Self> {
        if left + right != 100 {
            return Err(Error::param(format!(
                "allocation {left}:{right} does not sum to 100"
            )));
        }
        Ok(Allocation { left, right })
    }
}

impl Default for Allocation {
    fn default() -> Self {
        Allocation {
            left: 50,
            right: 50,
        }
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.left, self.right)
    }
}

impl FromStr for Allocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (l, r) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("allocation '{s}' is not LEFT:RIGHT")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::param(format!("allocation '{s}' is not LEFT:RIGHT")))
        };
        Allocation::new(parse(l)?, parse(r)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub m: usize,
    pub n: usize,
    pub pi0: f64,
    pub setting: Setting,
    pub allocation: Allocation,
    pub reps: usize,
    pub seed: u64,
    pub q: f64,
    pub problem: TestProblem,
    pub bootstrap: BootstrapScheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            m: 100,
            n: 50,
            pi0: 0.5,
            setting: Setting::Uniform,
            allocation: Allocation::default(),
            reps: 1000,
            seed: 1,
            q: 0.05,
            problem: TestProblem::OneSampleTwoSided,
            bootstrap: BootstrapScheme::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::param("m must be at least 2"));
        }
        if self.n < 1 {
            return Err(Error::param("n must be at least 1"));
        }
        if self.problem.is_two_sample() && self.n < 2 {
            return Err(Error::param("two-sample problems need n >= 2"));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(Error::param(format!("pi0 {} outside (0, 1)", self.pi0)));
        }
        if self.reps < 1 {
            return Err(Error::param("at least one replication is required"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::param(format!("q {} outside (0, 1)", self.q)));
        }
        Allocation::new(self.allocation.left, self.allocation.right)?;
        if let BootstrapScheme::Resample { replicates: 0 } = self.bootstrap {
            return Err(Error::param("bootstrap needs at least one replicate"));
        }
        Ok(())
    }

    /// m₀ = ⌊m·π₀⌋.
    pub fn null_count(&self) -> usize {
        ((self.m as f64 * self.pi0) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLabels {
    pub is_null: Vec<bool>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Kind {
    Null,
    Better,
    Poor,
}

fn draw_theta(setting: Setting, lo: f64, hi: f64, rng: &mut Stream) -> Result<f64> {
    match setting {
        Setting::Uniform => sample_uniform(lo, hi, rng),
        Setting::Exponential => sample_truncated_exponential(1.0, lo, hi, rng),
    }
}

/// Assign θ to each of the m segments: m₀ nulls at random positions,
/// round(right% · m₁) better and the rest poor.
pub fn gen_theta(config: &SimConfig, rng: &mut Stream) -> Result<TruthLabels> {
    config.validate()?;
    let m0 = config.null_count();
    let m1 = config.m - m0;
    let right = ((config.allocation.right as f64 / 100.0) * m1 as f64).round() as usize;
    let mut kinds: Vec<Kind> = std::iter::repeat_n(Kind::Null, m0)
        .chain(std::iter::repeat_n(Kind::Better, right))
        .chain(std::iter::repeat_n(Kind::Poor, m1 - right))
        .collect();
    kinds.shuffle(rng);
    let mut theta = Vec::with_capacity(config.m);
    for k in &kinds {
        theta.push(match k {
            Kind::Null => 1.0,
            Kind::Better => draw_theta(config.setting, 1.0, 1.5, rng)?,
            Kind::Poor => draw_theta(config.setting, 0.5, 1.0, rng)?,
        });
    }
    Ok(TruthLabels {
        is_null: kinds.iter().map(|k| matches!(k, Kind::Null)).collect(),
        theta,
    })
}

/// Simulate one segment's data and test it.
fn simulate_segment(
    problem: TestProblem,
    n: usize,
    theta: f64,
    rng: &mut Stream,
) -> Result<TestResult> {
    let mut draw = |mean: f64| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| sample_exponential(mean, &mut *rng))
            .collect()
    };
    if problem.is_two_sample() {
        let x = draw(1.0)?;
        let y = draw(theta)?;
        lrt_two_sample(&x, &y, problem.is_two_sided())
    } else {
        lrt_one_sample(&draw(theta)?, problem.is_two_sided())
    }
}

/// Everything one replication contributes to the cell metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    /// π̂₀ in [`ESTIMATORS`] order.
    pub estimates: [f64; 4],
    /// Adaptive BH with each estimate, in [`ESTIMATORS`] order.
    pub adaptive: [ConfusionCounts; 4],
    pub nonadaptive: ConfusionCounts,
    /// Rejected non-nulls per method (adaptive in order, then non-adaptive).
    pub true_discoveries: [usize; 5],
    pub nonnull_count: usize,
}

fn suite_values(s: &Pi0Suite) -> [f64; 4] {
    [s.bootstrap.value, s.average.value, s.u.value, s.e.value]
}

/// One replication of the study under `config`.
pub fn run_replication(
    config: &SimConfig,
    rng: &mut Stream,
    cache: &mut ModelCache,
) -> Result<ReplicationOutcome> {
    let truth = gen_theta(config, rng)?;
    let results = truth
        .theta
        .iter()
        .map(|&t| simulate_segment(config.problem, config.n, t, rng))
        .collect::<Result<Vec<_>>>()?;
    let (pvals, effects) = sets_from_results(&results)?;
    let suite = estimate_all(&pvals, &effects, config.bootstrap, rng, cache)?;
    let estimates = suite_values(&suite);

    let score = |pi0: f64| -> Result<(ConfusionCounts, usize)> {
        let adj = bh_adjust(&pvals, floor_pi0(pi0, config.m))?;
        let rej = reject_at(&adj, config.q);
        let counts = confusion(&rej, &truth.is_null)?;
        Ok((counts, counts.rejections - counts.false_discoveries))
    };
    let mut adaptive = [ConfusionCounts {
        rejections: 0,
        false_discoveries: 0,
        fdp: 0.0,
    }; 4];
    let mut true_discoveries = [0; 5];
    for (k, &est) in estimates.iter().enumerate() {
        let (c, tp) = score(est)?;
        adaptive[k] = c;
        true_discoveries[k] = tp;
    }
    let (nonadaptive, tp) = score(1.0)?;
    true_discoveries[4] = tp;
    Ok(ReplicationOutcome {
        estimates,
        adaptive,
        nonadaptive,
        true_discoveries,
        nonnull_count: truth.is_null.iter().filter(|&&n| !n).count(),
    })
}

/// Run all replications of one cell; outcomes are returned in replication order.
pub fn run_replications(config: &SimConfig) -> Result<Vec<ReplicationOutcome>> {
    config.validate()?;
    (0..config.reps as u64)
        .into_par_iter()
        .map_init(
            || ModelCache::new(config.problem),
            |cache, r| run_replication(config, &mut substream(config.seed, "rep", r), cache),
        )
        .collect()
}

/// Aggregated metrics for one (cell, estimator) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub m: usize,
    pub n: usize,
    pub pi0: f64,
    pub setting: Setting,
    pub allocation: String,
    pub problem: TestProblem,
    pub reps: usize,
    pub q: f64,
    pub estimator: String,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mse: f64,
    /// Mean proportion of the m hypotheses rejected by adaptive BH.
    pub power: f64,
    pub nonadaptive_power: f64,
    /// Mean FDP of adaptive BH.
    pub fdr: f64,
    pub nonadaptive_fdr: f64,
    /// Mean share of non-nulls rejected by adaptive BH.
    pub sensitivity: f64,
}

/// Fold replication outcomes (in order) into one row per estimator.
pub fn summarize(config: &SimConfig, outcomes: &[ReplicationOutcome]) -> Vec<MetricsRow> {
    let reps = outcomes.len() as f64;
    let m = config.m as f64;
    let mean = |f: &dyn Fn(&ReplicationOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / reps;
    let nonadaptive_power = mean(&|o| o.nonadaptive.rejections as f64 / m);
    let nonadaptive_fdr = mean(&|o| o.nonadaptive.fdp);
    ESTIMATORS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mean_estimate = mean(&|o| o.estimates[k]);
            MetricsRow {
                m: config.m,
                n: config.n,
                pi0: config.pi0,
                setting: config.setting,
                allocation: config.allocation.to_string(),
                problem: config.problem,
                reps: outcomes.len(),
                q: config.q,
                estimator: (*name).to_string(),
                mean_estimate,
                bias: mean_estimate - config.pi0,
                mse: mean(&|o| (o.estimates[k] - config.pi0).powi(2)),
                power: mean(&|o| o.adaptive[k].rejections as f64 / m),
                nonadaptive_power,
                fdr: mean(&|o| o.adaptive[k].fdp),
                nonadaptive_fdr,
                sensitivity: mean(&|o| {
                    if o.nonnull_count == 0 {
                        0.0
                    } else {
                        o.true_discoveries[k] as f64 / o.nonnull_count as f64
                    }
                }),
            }
        })
        .collect()
}

/// Run every cell of `grid` and collect the metrics rows in grid order.
pub fn run_study(grid: &[SimConfig]) -> Result<Vec<MetricsRow>> {
    if grid.is_empty() {
        return Err(Error::param("empty simulation grid"));
    }
    let mut rows = Vec::with_capacity(grid.len() * ESTIMATORS.len());
    for cfg in grid {
        let outcomes = run_replications(cfg)?;
        rows.extend(summarize(cfg, &outcomes));
    }
    Ok(rows)
}

/// Write the metrics table as CSV, one row per (cell, estimator).
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write π₀ against power: one column for non-adaptive BH and one per estimator.
pub fn write_power_curve(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["pi0".to_string(), "nonadaptive".to_string()];
    header.extend(ESTIMATORS.iter().map(|e| e.to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for cell in rows.chunks(ESTIMATORS.len()) {
        let mut rec = vec![
            cell[0].pi0.to_string(),
            cell[0].nonadaptive_power.to_string(),
        ];
        rec.extend(cell.iter().map(|r| r.power.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::input(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(pi0: f64) -> SimConfig {
        SimConfig {
            m: 40,
            n: 20,
            pi0,
            reps: 16,
            seed: 9,
            ..SimConfig::default()
        }
    }

    #[test]
    fn theta_counts_and_support() {
        let cfg = SimConfig {
            m: 100,
            pi0: 0.5,
            ..SimConfig::default()
        };
        let t = gen_theta(&cfg, &mut substream(1, "t", 0)).unwrap();
        assert_eq!(t.is_null.iter().filter(|&&b| b).count(), 50);
        let mut better = 0;
        for (&null, &th) in t.is_null.iter().zip(&t.theta) {
            if null {
                assert_eq!(th, 1.0);
            } else {
                assert!((th > 0.5 && th < 1.0) || (th > 1.0 && th < 1.5), "{th}");
                better += usize::from(th > 1.0);
            }
        }
        assert_eq!(better, 25);
    }

    #[test]
    fn allocation_rounding() {
        // m₁ = 7, right 25% → round(1.75) = 2
        let cfg = SimConfig {
            m: 10,
            pi0: 0.3,
            allocation: "75:25".parse().unwrap(),
            ..SimConfig::default()
        };
        let t = gen_theta(&cfg, &mut substream(2, "t", 0)).unwrap();
        assert_eq!(t.is_null.iter().filter(|&&b| b).count(), 3);
        assert_eq!(t.theta.iter().filter(|&&x| x > 1.0).count(), 2);
        assert_eq!(t.theta.iter().filter(|&&x| x < 1.0).count(), 5);
    }

    #[test]
    fn exponential_setting_matches_truncated_cdf() {
        let cfg = SimConfig {
            m: 1000,
            pi0: 0.01,
            setting: Setting::Exponential,
            allocation: Allocation::new(0, 100).unwrap(),
            ..SimConfig::default()
        };
        let mut draws = Vec::new();
        let mut rng = substream(3, "t", 0);
        while draws.len() < 100_000 {
            let t = gen_theta(&cfg, &mut rng).unwrap();
            draws.extend(t.theta.iter().copied().filter(|&x| x != 1.0));
        }
        draws.truncate(100_000);
        draws.sort_by(f64::total_cmp);
        let z = 1.0 - (-0.5f64).exp();
        let cdf = |x: f64| (1.0 - (-(x - 1.0)).exp()) / z;
        let n = draws.len() as f64;
        let d = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn config_validation() {
        assert!(
            SimConfig {
                pi0: 1.0,
                ..small(0.5)
            }
            .validate()
            .is_err()
        );
        assert!(
            SimConfig {
                reps: 0,
                ..small(0.5)
            }
            .validate()
            .is_err()
        );
        assert!(
            SimConfig {
                q: 0.0,
                ..small(0.5)
            }
            .validate()
            .is_err()
        );
        assert!("60:30".parse::<Allocation>().is_err());
        assert!("x".parse::<Allocation>().is_err());
        assert_eq!(
            "25:75".parse::<Allocation>().unwrap(),
            Allocation::new(25, 75).unwrap()
        );
        assert!(run_study(&[]).is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = small(0.5);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_replications(&cfg).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_replications(&cfg).unwrap());
        assert_eq!(one, many);
        assert_eq!(one, run_replications(&cfg).unwrap());
    }

    #[test]
    fn metrics_are_coherent() {
        for problem in TestProblem::ALL {
            let cfg = SimConfig {
                problem,
                ..small(0.6)
            };
            let outcomes = run_replications(&cfg).unwrap();
            for o in &outcomes {
                for (k, c) in o.adaptive.iter().enumerate() {
                    // adaptive rejections contain the non-adaptive ones
                    assert!(c.rejections >= o.nonadaptive.rejections);
                    assert!(o.estimates[k] >= 0.0 && o.estimates[k] <= 1.0);
                }
            }
            for row in summarize(&cfg, &outcomes) {
                assert!(row.mse >= row.bias * row.bias - 1e-12);
                for v in [row.power, row.nonadaptive_power, row.fdr, row.sensitivity] {
                    assert!((0.0..=1.0).contains(&v));
                }
                assert!(row.power >= row.nonadaptive_power);
            }
        }
    }

    #[test]
    fn nearly_all_null_cell() {
        // m = 40, π₀ = 0.99 → m₀ = 39, a single alternative
        let cfg = SimConfig {
            pi0: 0.99,
            ..small(0.5)
        };
        let rows = run_study(&[cfg]).unwrap();
        for r in &rows {
            assert!(
                r.mean_estimate > 0.8,
                "{}: {}",
                r.estimator,
                r.mean_estimate
            );
        }
    }

    #[test]
    fn tables_written() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run_study(&[small(0.3), small(0.7)]).unwrap();
        let table = dir.path().join("metrics.csv");
        let curve = dir.path().join("power.csv");
        write_metrics(&rows, &table).unwrap();
        write_power_curve(&rows, &curve).unwrap();
        let text = std::fs::read_to_string(&table).unwrap();
        assert!(text.starts_with("m,n,pi0,setting,allocation,problem,reps,q,estimator,"));
        assert_eq!(text.lines().count(), 1 + 8);
        let curve = std::fs::read_to_string(&curve).unwrap();
        assert_eq!(
            curve.lines().next().unwrap(),
            "pi0,nonadaptive,bootstrap,average,U,E"
        );
        assert_eq!(curve.lines().count(), 3);
    }
}
