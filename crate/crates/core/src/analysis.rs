//! Segment-level analysis: exponentiality checks, exact confidence
//! intervals, π₀ estimation and adaptive BH over all segments.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive_bh::{bh_adjust, floor_pi0, reject_at};
use crate::dist::{DistParams, exponential_from_uniform};
use crate::error::{Error, Result};
use crate::estimators::{
    BootstrapScheme, EffectSet, PValueSet, Pi0Estimate, Pi0Method, estimate_all,
};
use crate::io::{SegmentRecord, SummaryRecord};
use crate::lrt::{ModelCache, SampleSizes, TestProblem, lrt_one_sample};
use crate::rng::{Stream, open_unit, substream};
use crate::simulation::csv_error;

/// Kolmogorov–Smirnov distance between the sample and an exponential with
/// the sample mean.
pub fn ks_statistic(samples: &[f64]) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = -(-v / mean).exp_m1();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Parametric-bootstrap p-value of the KS test for exponentiality with
/// estimated mean: (1 + #{D_b ≥ D}) / (B + 1).
pub fn ks_exponentiality(samples: &[f64], replicates: usize, rng: &mut Stream) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::input(
            "exponentiality test needs at least 3 observations",
        ));
    }
    if replicates < 99 {
        return Err(Error::param("use at least 99 bootstrap replicates"));
    }
    if let Some(v) = samples.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::input(format!("observation {v} is not positive")));
    }
    let d = ks_statistic(samples);
    // D is scale-free once the mean is refitted, so unit-mean draws suffice
    let mut buf = vec![0.0; samples.len()];
    let mut exceed = 0usize;
    for _ in 0..replicates {
        for b in buf.iter_mut() {
            *b = exponential_from_uniform(1.0, open_unit(rng));
        }
        if ks_statistic(&buf) >= d {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (replicates + 1) as f64)
}

/// Exact equal-tailed CI for an exponential mean from n observations with sum `sum`.
pub fn ci_theta_from_sum(sum: f64, n: u32, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::input(
            "confidence interval needs at least one observation",
        ));
    }
    let dist = DistParams::chi_squared(2 * n)?;
    let alpha = 0.5 * (1.0 - level);
    let t = 2.0 * sum;
    Ok((
        t / dist.quantile_upper(alpha)?,
        t / dist.quantile_lower(alpha)?,
    ))
}

/// Exact CI for θ from T = 2Σx ~ θχ²_{2n}.
pub fn ci_theta(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = u32::try_from(samples.len()).map_err(|_| Error::input("sample too large"))?;
    ci_theta_from_sum(samples.iter().sum(), n, level)
}

/// Which π₀ estimate drives the adaptive adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    U,
    E,
    Bootstrap,
    Average,
    /// Report every estimate and adjust with U.
    All,
}

impl EstimatorChoice {
    fn method(self) -> Pi0Method {
        match self {
            EstimatorChoice::U | EstimatorChoice::All => Pi0Method::BiasCorrectedU,
            EstimatorChoice::E => Pi0Method::BiasCorrectedE,
            EstimatorChoice::Bootstrap => Pi0Method::StoreyBootstrap,
            EstimatorChoice::Average => Pi0Method::Average,
        }
    }
}

impl FromStr for EstimatorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" => Ok(EstimatorChoice::U),
            "e" => Ok(EstimatorChoice::E),
            "bootstrap" => Ok(EstimatorChoice::Bootstrap),
            "average" => Ok(EstimatorChoice::Average),
            "all" => Ok(EstimatorChoice::All),
            _ => Err(Error::param(format!("unknown estimator '{s}'"))),
        }
    }
}

impl fmt::Display for EstimatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorChoice::U => "u",
            EstimatorChoice::E => "e",
            EstimatorChoice::Bootstrap => "bootstrap",
            EstimatorChoice::Average => "average",
            EstimatorChoice::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    /// Benchmark mean; defaults to the grand mean of all raw observations.
    pub theta0: Option<f64>,
    pub q_levels: Vec<f64>,
    pub estimator: EstimatorChoice,
    /// Use this π₀ for the adjustment instead of an estimate.
    pub pi0_override: Option<f64>,
    pub bootstrap: BootstrapScheme,
    /// One-sample problem to test; two-sided by default.
    pub problem: TestProblem,
    /// Replicates for the exponentiality check; `None` skips it.
    pub ks_replicates: Option<usize>,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            theta0: None,
            q_levels: vec![0.05, 0.1],
            estimator: EstimatorChoice::All,
            pi0_override: None,
            bootstrap: BootstrapScheme::default(),
            problem: TestProblem::OneSampleTwoSided,
            ks_replicates: Some(999),
            ci_level: 0.95,
            seed: 1,
        }
    }
}

pub enum AnalysisInput<'a> {
    Segments(&'a [SegmentRecord]),
    Summary(&'a [SummaryRecord]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub segment: String,
    pub labels: Vec<(String, String)>,
    pub n: u32,
    /// x̄ / θ₀, or the supplied effect estimate for summary input.
    pub scaled_mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pval: f64,
    pub adj_pval: f64,
    pub nonadaptive_adj_pval: f64,
    /// One flag per q level, in the report's order.
    pub reject: Vec<bool>,
    pub nonadaptive_reject: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub segment: String,
    pub n: usize,
    pub ks_d: f64,
    pub ks_pval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub theta0: Option<f64>,
    pub problem: TestProblem,
    pub q_levels: Vec<f64>,
    pub estimator: EstimatorChoice,
    pub estimates: Vec<Pi0Estimate>,
    /// π₀ actually used in the adjustment (after flooring at 1/m).
    pub pi0_used: f64,
    pub segments: Vec<SegmentRow>,
    /// Exponentiality checks for segments with at least 3 observations.
    pub validation: Vec<ValidationRow>,
}

impl AnalysisReport {
    /// Rejected segment indices at q level `k`.
    pub fn rejected(&self, k: usize) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| self.segments[i].reject[k])
            .collect()
    }

    pub fn nonadaptive_rejected(&self, k: usize) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| self.segments[i].nonadaptive_reject[k])
            .collect()
    }

    pub fn estimate(&self, method: Pi0Method) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.method == method)
            .map(|e| e.value)
    }
}

struct Prepared {
    ids: Vec<String>,
    labels: Vec<Vec<(String, String)>>,
    n: Vec<u32>,
    scaled_mean: Vec<f64>,
    ci: Vec<(f64, f64)>,
    pvals: Vec<f64>,
    effects: Vec<f64>,
}

fn check_options(opts: &AnalyzeOptions) -> Result<()> {
    if opts.problem.is_two_sample() {
        return Err(Error::param(
            "segment analysis supports one-sample problems only",
        ));
    }
    if opts.q_levels.is_empty() {
        return Err(Error::param("at least one q level is required"));
    }
    if let Some(q) = opts.q_levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::param(format!("q level {q} outside (0, 1)")));
    }
    if let Some(t) = opts.theta0
        && !(t > 0.0 && t.is_finite())
    {
        return Err(Error::param(format!("theta0 {t} must be positive")));
    }
    if let Some(p) = opts.pi0_override
        && !(p > 0.0 && p <= 1.0)
    {
        return Err(Error::param(format!("pi0 override {p} outside (0, 1]")));
    }
    Ok(())
}

fn prepare_segments(
    segs: &[SegmentRecord],
    theta0: f64,
    opts: &AnalyzeOptions,
) -> Result<Prepared> {
    let rows = segs
        .par_iter()
        .map(|s| {
            let scaled: Vec<f64> = s.samples.iter().map(|x| x / theta0).collect();
            let test = lrt_one_sample(&scaled, opts.problem.is_two_sided())?;
            let n = scaled.len() as u32;
            let mean = scaled.iter().sum::<f64>() / f64::from(n);
            let ci = ci_theta(&scaled, opts.ci_level)?;
            Ok((n, mean, ci, test.p_value, test.effect))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        ids: segs.iter().map(|s| s.segment_id.clone()).collect(),
        labels: segs.iter().map(|s| s.labels.clone()).collect(),
        n: rows.iter().map(|r| r.0).collect(),
        scaled_mean: rows.iter().map(|r| r.1).collect(),
        ci: rows.iter().map(|r| r.2).collect(),
        pvals: rows.iter().map(|r| r.3).collect(),
        effects: rows.iter().map(|r| r.4).collect(),
    })
}

fn prepare_summary(rows: &[SummaryRecord], opts: &AnalyzeOptions) -> Result<Prepared> {
    let ci = rows
        .iter()
        .map(|r| ci_theta_from_sum(f64::from(r.n) * r.del, r.n, opts.ci_level))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        ids: rows.iter().map(|r| r.segment.to_string()).collect(),
        labels: vec![Vec::new(); rows.len()],
        n: rows.iter().map(|r| r.n).collect(),
        scaled_mean: rows.iter().map(|r| r.del).collect(),
        ci,
        pvals: rows.iter().map(|r| r.pval).collect(),
        effects: rows.iter().map(|r| r.del).collect(),
    })
}

/// Exponentiality checks with one substream per segment.
pub fn validate_segments(
    segs: &[SegmentRecord],
    replicates: usize,
    seed: u64,
) -> Result<Vec<ValidationRow>> {
    segs.par_iter()
        .enumerate()
        .filter(|(_, s)| s.samples.len() >= 3)
        .map(|(i, s)| {
            let mut rng = substream(seed, "ks", i as u64);
            Ok(ValidationRow {
                segment: s.segment_id.clone(),
                n: s.samples.len(),
                ks_d: ks_statistic(&s.samples),
                ks_pval: ks_exponentiality(&s.samples, replicates, &mut rng)?,
            })
        })
        .collect()
}

/// Grand mean of all pooled observations.
pub fn grand_mean(segs: &[SegmentRecord]) -> Result<f64> {
    let (sum, count) = segs
        .iter()
        .flat_map(|s| &s.samples)
        .fold((0.0, 0usize), |(s, c), &x| (s + x, c + 1));
    if count == 0 {
        return Err(Error::input("no observations"));
    }
    Ok(sum / count as f64)
}

/// Test every segment, estimate π₀, and apply adaptive BH at each q level.
pub fn analyze(input: AnalysisInput<'_>, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    check_options(opts)?;
    let (prep, theta0, validation) = match input {
        AnalysisInput::Segments(segs) => {
            if segs.is_empty() {
                return Err(Error::input("no segments"));
            }
            let theta0 = match opts.theta0 {
                Some(t) => t,
                None => grand_mean(segs)?,
            };
            let validation = match opts.ks_replicates {
                Some(b) => validate_segments(segs, b, opts.seed)?,
                None => Vec::new(),
            };
            (
                prepare_segments(segs, theta0, opts)?,
                Some(theta0),
                validation,
            )
        }
        AnalysisInput::Summary(rows) => {
            if rows.is_empty() {
                return Err(Error::input("no summary rows"));
            }
            (prepare_summary(rows, opts)?, None, Vec::new())
        }
    };

    let m = prep.pvals.len();
    let pvals = PValueSet::new(prep.pvals.clone())?;
    let sizes: Vec<SampleSizes> = prep.n.iter().map(|&n| SampleSizes::One(n)).collect();
    let effects = EffectSet::new(prep.effects.clone(), sizes, opts.problem)?;
    let mut rng = substream(opts.seed, "pi0", 0);
    let mut cache = ModelCache::new(opts.problem);
    let suite = estimate_all(&pvals, &effects, opts.bootstrap, &mut rng, &mut cache)?;
    let estimates: Vec<Pi0Estimate> = suite.iter().cloned().collect();
    let chosen = estimates
        .iter()
        .find(|e| e.method == opts.estimator.method())
        .map(|e| e.value)
        .expect("suite covers every choice");
    let pi0_used = floor_pi0(opts.pi0_override.unwrap_or(chosen), m);

    let adaptive = bh_adjust(&pvals, pi0_used)?;
    let classical = bh_adjust(&pvals, 1.0)?;
    let flags = |adj| -> Vec<Vec<bool>> {
        let sets: Vec<_> = opts.q_levels.iter().map(|&q| reject_at(adj, q)).collect();
        (0..m)
            .map(|i| sets.iter().map(|s| s.contains(i)).collect())
            .collect()
    };
    let reject = flags(&adaptive);
    let nonadaptive_reject = flags(&classical);

    let segments = (0..m)
        .map(|i| SegmentRow {
            segment: prep.ids[i].clone(),
            labels: prep.labels[i].clone(),
            n: prep.n[i],
            scaled_mean: prep.scaled_mean[i],
            ci_lo: prep.ci[i].0,
            ci_hi: prep.ci[i].1,
            pval: prep.pvals[i],
            adj_pval: adaptive.adjusted[i],
            nonadaptive_adj_pval: classical.adjusted[i],
            reject: reject[i].clone(),
            nonadaptive_reject: nonadaptive_reject[i].clone(),
        })
        .collect();

    Ok(AnalysisReport {
        theta0,
        problem: opts.problem,
        q_levels: opts.q_levels.clone(),
        estimator: opts.estimator,
        estimates,
        pi0_used,
        segments,
        validation,
    })
}

/// Column suffix for a q level: 0.05 → "q05", 0.1 → "q10", 0.025 → "q025".
pub fn q_label(q: f64) -> String {
    let pct = q * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("q{:02}", pct.round() as u64)
    } else {
        format!(
            "q{}",
            format!("{q}").trim_start_matches("0.").replace('.', "_")
        )
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write π₀ estimates as CSV.
pub fn write_pi0_csv(estimates: &[Pi0Estimate], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(["estimator", "value", "lambda", "d", "initial", "e_hat"])
        .map_err(err)?;
    for e in estimates {
        let d = &e.diagnostics;
        w.write_record([
            e.method.label().to_string(),
            e.value.to_string(),
            opt(d.lambda),
            d.d.map(|x| x.to_string()).unwrap_or_default(),
            opt(d.initial),
            opt(d.e_hat),
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

/// Write the per-segment table as CSV.
pub fn write_segments_csv(report: &AnalysisReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    let label_names: Vec<String> = report
        .segments
        .first()
        .map(|s| s.labels.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = vec!["segment".into()];
    header.extend(label_names.iter().cloned());
    header.extend(
        ["n", "scaled_mean", "ci_lo", "ci_hi", "pval", "adj_pval"]
            .iter()
            .map(|s| s.to_string()),
    );
    header.extend(
        report
            .q_levels
            .iter()
            .map(|&q| format!("reject_{}", q_label(q))),
    );
    w.write_record(&header).map_err(err)?;
    for s in &report.segments {
        let mut rec = vec![s.segment.clone()];
        rec.extend(s.labels.iter().map(|(_, v)| v.clone()));
        rec.extend([
            s.n.to_string(),
            s.scaled_mean.to_string(),
            s.ci_lo.to_string(),
            s.ci_hi.to_string(),
            s.pval.to_string(),
            s.adj_pval.to_string(),
        ]);
        rec.extend(s.reject.iter().map(|&r| u8::from(r).to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    finish(w, path)
}

/// Write the exponentiality checks as CSV.
pub fn write_validation_csv(rows: &[ValidationRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    finish(w, path)
}

/// Rejection counts over a grid of q levels, adaptive and classical.
pub fn rejection_curve(report: &AnalysisReport) -> Vec<(f64, usize, usize)> {
    (1..=50)
        .map(|k| {
            let q = 0.005 * k as f64;
            let count = |f: &dyn Fn(&SegmentRow) -> f64| {
                report.segments.iter().filter(|s| f(s) <= q).count()
            };
            (
                q,
                count(&|s| s.adj_pval),
                count(&|s| s.nonadaptive_adj_pval),
            )
        })
        .collect()
}

/// Write every report artifact into `dir`.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    write_pi0_csv(&report.estimates, &dir.join("pi0_estimates.csv"))?;
    write_json(&report.estimates, &dir.join("pi0_estimates.json"))?;
    write_segments_csv(report, &dir.join("segments.csv"))?;
    write_json(&report.segments, &dir.join("segments.json"))?;
    write_json(report, &dir.join("report.json"))?;
    if !report.validation.is_empty() {
        write_validation_csv(&report.validation, &dir.join("validation.csv"))?;
    }

    let path = plots.join("adjusted_p.csv");
    let mut w = csv_writer(&path)?;
    let mut adj: Vec<f64> = report.segments.iter().map(|s| s.adj_pval).collect();
    adj.sort_by(f64::total_cmp);
    w.write_record(["rank", "adj_pval"])
        .map_err(|e| csv_error(&path, e))?;
    for (i, a) in adj.iter().enumerate() {
        w.write_record([(i + 1).to_string(), a.to_string()])
            .map_err(|e| csv_error(&path, e))?;
    }
    finish(w, &path)?;

    let path = plots.join("power_curve.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["q", "adaptive", "nonadaptive"])
        .map_err(|e| csv_error(&path, e))?;
    for (q, a, c) in rejection_curve(report) {
        w.write_record([format!("{q:.3}"), a.to_string(), c.to_string()])
            .map_err(|e| csv_error(&path, e))?;
    }
    finish(w, &path)
}

/// Read back a report written by [`write_report`].
pub fn read_report(dir: &Path) -> Result<AnalysisReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
