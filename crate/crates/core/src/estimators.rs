//! Estimators of π₀, the proportion of true null hypotheses.
//!
//! The Storey family works from p-values alone. The two bias-corrected
//! estimators ([`pi0_u`], [`pi0_e`]) additionally use each test's estimated
//! effect size to subtract the share of non-null p-values that would land
//! above λ (or contribute to the mean p-value), assuming the d = ⌊m(1 − π̂₀ᴵ)⌋
//! least-favourable tests are the alternatives.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrt::{ModelCache, SampleSizes, TestProblem, TestResult};

/// λ grid for the bootstrap estimators.
pub const BOOTSTRAP_GRID: [f64; 20] = [
    0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75,
    0.80, 0.85, 0.90, 0.95,
];

/// λ grid for the average and bias-corrected U estimators.
pub const AVERAGE_GRID: [f64; 7] = [0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

/// Bootstrap replicates used for the resampling initial estimate.
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 100;

/// Denominators at or below this are treated as "no detectable alternatives".
const DEGENERATE: f64 = 1e-9;

/// A validated set of p-values, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PValueSet {
    p: Vec<f64>,
}

impl PValueSet {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::input("empty p-value set"));
        }
        if let Some((i, v)) = p
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
        {
            return Err(Error::input(format!(
                "p-value {v} at position {i} is outside (0, 1)"
            )));
        }
        Ok(PValueSet { p })
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// W(λ) = #{pᵢ > λ}.
    pub fn count_above(&self, lambda: f64) -> usize {
        self.p.iter().filter(|&&p| p > lambda).count()
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.p.len() as f64
    }
}

/// Estimated effect sizes δ̂ᵢ with the sample sizes that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSet {
    effects: Vec<f64>,
    sizes: Vec<SampleSizes>,
    problem: TestProblem,
}

impl EffectSet {
    pub fn new(effects: Vec<f64>, sizes: Vec<SampleSizes>, problem: TestProblem) -> Result<Self> {
        if effects.len() != sizes.len() {
            return Err(Error::input(format!(
                "{} effects but {} sample-size entries",
                effects.len(),
                sizes.len()
            )));
        }
        if let Some(d) = effects.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::input(format!("effect size {d} is not positive")));
        }
        Ok(EffectSet {
            effects,
            sizes,
            problem,
        })
    }

    /// Every test shares the same sample size(s).
    pub fn uniform(effects: Vec<f64>, sizes: SampleSizes, problem: TestProblem) -> Result<Self> {
        let n = effects.len();
        EffectSet::new(effects, vec![sizes; n], problem)
    }

    pub fn effects(&self) -> &[f64] {
        &self.effects
    }

    pub fn sizes(&self) -> &[SampleSizes] {
        &self.sizes
    }

    pub fn problem(&self) -> TestProblem {
        self.problem
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }
}

/// Split test results into aligned p-value and effect sets.
pub fn sets_from_results(results: &[TestResult]) -> Result<(PValueSet, EffectSet)> {
    let first = results
        .first()
        .ok_or_else(|| Error::input("no test results"))?;
    if results.iter().any(|r| r.problem != first.problem) {
        return Err(Error::input("test results mix different problems"));
    }
    let p = PValueSet::new(results.iter().map(|r| r.p_value).collect())?;
    let e = EffectSet::new(
        results.iter().map(|r| r.effect).collect(),
        results.iter().map(|r| r.sizes).collect(),
        first.problem,
    )?;
    Ok((p, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pi0Method {
    StoreyLambda,
    StoreyBootstrap,
    Average,
    BiasCorrectedU,
    BiasCorrectedE,
}

impl Pi0Method {
    pub fn label(self) -> &'static str {
        match self {
            Pi0Method::StoreyLambda => "storey",
            Pi0Method::StoreyBootstrap => "bootstrap",
            Pi0Method::Average => "average",
            Pi0Method::BiasCorrectedU => "U",
            Pi0Method::BiasCorrectedE => "E",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pi0Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Q̂(λⱼ) over [`AVERAGE_GRID`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi0Estimate {
    pub value: f64,
    pub method: Pi0Method,
    pub diagnostics: Pi0Diagnostics,
}

impl Pi0Estimate {
    fn plain(value: f64, method: Pi0Method) -> Self {
        Pi0Estimate {
            value: value.clamp(0.0, 1.0),
            method,
            diagnostics: Pi0Diagnostics::default(),
        }
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param(format!("lambda {lambda} outside (0, 1)")));
    }
    Ok(())
}

fn storey_from_count(w: usize, m: usize, lambda: f64) -> f64 {
    w as f64 / (m as f64 * (1.0 - lambda))
}

/// Storey's estimator W(λ) / (m(1 − λ)); not clamped.
pub fn storey_lambda(pvals: &PValueSet, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(storey_from_count(
        pvals.count_above(lambda),
        pvals.len(),
        lambda,
    ))
}

/// Storey's estimator at a fixed λ, clamped and wrapped.
pub fn storey_lambda_estimate(pvals: &PValueSet, lambda: f64) -> Result<Pi0Estimate> {
    let mut est = Pi0Estimate::plain(storey_lambda(pvals, lambda)?, Pi0Method::StoreyLambda);
    est.diagnostics.lambda = Some(lambda);
    Ok(est)
}

/// W over [`BOOTSTRAP_GRID`] from bin counts: `bins[k]` holds the number of
/// p-values in (λₖ, λₖ₊₁] (last bin open-ended at 1).
fn grid_counts(bins: &[usize; 20]) -> [usize; 20] {
    let mut w = [0usize; 20];
    let mut acc = 0;
    for k in (0..20).rev() {
        acc += bins[k];
        w[k] = acc;
    }
    w
}

fn grid_bin(p: f64) -> usize {
    // index of the largest grid point strictly below p
    BOOTSTRAP_GRID
        .iter()
        .rposition(|&l| p > l)
        .expect("p-values are positive")
}

/// Storey's bootstrap estimator with resampling.
///
/// For each λ in [`BOOTSTRAP_GRID`] the clamped π̂₀(λ) is compared with the
/// smallest clamped grid estimate across `replicates` resamples; the λ with
/// the smallest mean squared deviation (first on ties) is used.
pub fn storey_bootstrap<R: RngCore + ?Sized>(
    pvals: &PValueSet,
    replicates: usize,
    rng: &mut R,
) -> Result<Pi0Estimate> {
    let m = pvals.len();
    if m < 2 {
        return Err(Error::input(
            "bootstrap estimator needs at least 2 p-values",
        ));
    }
    if replicates == 0 {
        return Err(Error::param("bootstrap needs at least one replicate"));
    }
    // resampling from sorted bins makes the result independent of input order
    let mut bin_of: Vec<usize> = pvals.values().iter().map(|&p| grid_bin(p)).collect();
    bin_of.sort_unstable();
    let mut bins = [0usize; 20];
    for &b in &bin_of {
        bins[b] += 1;
    }
    let estimates = |bins: &[usize; 20]| -> [f64; 20] {
        let w = grid_counts(bins);
        std::array::from_fn(|k| clamp01(storey_from_count(w[k], m, BOOTSTRAP_GRID[k])))
    };
    let full = estimates(&bins);
    let target = full.iter().copied().fold(f64::INFINITY, f64::min);

    let mut mse = [0.0f64; 20];
    for _ in 0..replicates {
        let mut boot = [0usize; 20];
        for _ in 0..m {
            boot[bin_of[rng.gen_range(0..m)]] += 1;
        }
        for (acc, e) in mse.iter_mut().zip(estimates(&boot)) {
            *acc += (e - target).powi(2);
        }
    }
    let best = argmin_first(&mse);
    let mut est = Pi0Estimate::plain(full[best], Pi0Method::StoreyBootstrap);
    est.diagnostics.lambda = Some(BOOTSTRAP_GRID[best]);
    Ok(est)
}

/// Storey's bootstrap estimator with the analytic MSE criterion.
///
/// Bootstrap variance of π̂₀(λ) is replaced by its closed form
/// W(1 − W/m) / (m²(1 − λ)²), and the bias target is the 10% quantile of
/// the grid estimates. Among λ values attaining the minimum MSE the
/// smallest estimate is returned, clamped to [0, 1].
pub fn storey_bootstrap_analytic(pvals: &PValueSet) -> Result<Pi0Estimate> {
    let m = pvals.len();
    if m < 2 {
        return Err(Error::input(
            "bootstrap estimator needs at least 2 p-values",
        ));
    }
    let mut bins = [0usize; 20];
    for &p in pvals.values() {
        bins[grid_bin(p)] += 1;
    }
    let w = grid_counts(&bins);
    let mf = m as f64;
    let raw: [f64; 20] = std::array::from_fn(|k| storey_from_count(w[k], m, BOOTSTRAP_GRID[k]));
    let target = quantile_type7(&raw, 0.1);
    let mse: [f64; 20] = std::array::from_fn(|k| {
        let wk = w[k] as f64;
        let one_minus = 1.0 - BOOTSTRAP_GRID[k];
        wk / (mf * mf * one_minus * one_minus) * (1.0 - wk / mf) + (raw[k] - target).powi(2)
    });
    let min_mse = mse.iter().copied().fold(f64::INFINITY, f64::min);
    let (best, value) = (0..20)
        .filter(|&k| mse[k] == min_mse)
        .map(|k| (k, raw[k]))
        .fold((usize::MAX, f64::INFINITY), |acc, c| {
            if c.1 < acc.1 { c } else { acc }
        });
    let mut est = Pi0Estimate::plain(value, Pi0Method::StoreyBootstrap);
    est.diagnostics.lambda = Some(BOOTSTRAP_GRID[best]);
    Ok(est)
}

/// Linear-interpolation sample quantile (the common "type 7" definition).
fn quantile_type7(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// How the initial estimate π̂₀ᴵ for the bias-corrected estimators is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum BootstrapScheme {
    /// Closed-form MSE ([`storey_bootstrap_analytic`]).
    #[default]
    Analytic,
    /// Resampling with the given number of replicates ([`storey_bootstrap`]).
    Resample { replicates: usize },
}

/// Storey's bootstrap estimate under the chosen scheme.
pub fn bootstrap_estimate<R: RngCore + ?Sized>(
    pvals: &PValueSet,
    scheme: BootstrapScheme,
    rng: &mut R,
) -> Result<Pi0Estimate> {
    match scheme {
        BootstrapScheme::Analytic => storey_bootstrap_analytic(pvals),
        BootstrapScheme::Resample { replicates } => storey_bootstrap(pvals, replicates, rng),
    }
}

/// Mean of Storey's estimator over [`AVERAGE_GRID`], clamped once at the end.
pub fn average_estimator(pvals: &PValueSet) -> Pi0Estimate {
    let m = pvals.len();
    let sum: f64 = AVERAGE_GRID
        .iter()
        .map(|&l| storey_from_count(pvals.count_above(l), m, l))
        .sum();
    Pi0Estimate::plain(sum / AVERAGE_GRID.len() as f64, Pi0Method::Average)
}

/// Mean of the `d` smallest entries of `values`; zero when `d` is zero.
pub fn conservative_tail_average(values: &[f64], d: usize) -> Result<f64> {
    if d > values.len() {
        return Err(Error::param(format!(
            "d = {d} exceeds the {} available values",
            values.len()
        )));
    }
    if d == 0 {
        return Ok(0.0);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[..d].iter().sum::<f64>() / d as f64)
}

/// d = ⌊m(1 − π̂₀ᴵ)⌋, the assumed number of alternatives.
pub fn assumed_alternatives(m: usize, initial: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&initial) {
        return Err(Error::param(format!(
            "initial estimate {initial} outside [0, 1]"
        )));
    }
    // the small guard keeps e.g. 100·(1 − 0.7) from flooring to 29
    let d = (m as f64 * (1.0 - initial) + 1e-9).floor() as usize;
    Ok(d.min(m))
}

fn check_aligned(pvals: &PValueSet, effects: &EffectSet) -> Result<()> {
    if pvals.len() != effects.len() {
        return Err(Error::input(format!(
            "{} p-values but {} effect sizes",
            pvals.len(),
            effects.len()
        )));
    }
    Ok(())
}

/// Per-test Q_{δ̂ᵢ}(λⱼ), indexed [j][i], grouped by sample sizes so each
/// distinct size pays for its null quantiles once.
fn q_matrix(effects: &EffectSet, lambdas: &[f64], cache: &mut ModelCache) -> Result<Vec<Vec<f64>>> {
    let m = effects.len();
    let mut out = vec![vec![0.0; m]; lambdas.len()];
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| size_key(effects.sizes[i]));
    for group in order.chunk_by(|&a, &b| effects.sizes[a] == effects.sizes[b]) {
        let model = cache.get(effects.sizes[group[0]])?;
        let deltas: Vec<f64> = group.iter().map(|&i| effects.effects[i]).collect();
        let rows = model.q_upper_grid(&deltas, lambdas)?;
        for (&i, row) in group.iter().zip(rows) {
            for (j, q) in row.into_iter().enumerate() {
                out[j][i] = q;
            }
        }
    }
    Ok(out)
}

fn size_key(s: SampleSizes) -> (u32, u32) {
    match s {
        SampleSizes::One(n) => (n, 0),
        SampleSizes::Two { n1, n2 } => (n1, n2),
    }
}

fn pick_cache<'a>(
    effects: &EffectSet,
    given: Option<&'a mut ModelCache>,
    local: &'a mut ModelCache,
) -> Result<&'a mut ModelCache> {
    match given {
        Some(c) if c.problem() != effects.problem() => Err(Error::param(
            "model cache was built for a different test problem",
        )),
        Some(c) => Ok(c),
        None => Ok(local),
    }
}

/// Corrected Storey value at one λ, clamped; 1 when the denominator degenerates.
fn corrected_at(w_over_m: f64, lambda: f64, q_hat: f64) -> f64 {
    let den = (1.0 - lambda) - q_hat;
    if den <= DEGENERATE {
        1.0
    } else {
        clamp01((w_over_m - q_hat) / den)
    }
}

fn corrected_mean(p_mean: f64, e_hat: f64) -> f64 {
    let den = 0.5 - e_hat;
    if den <= DEGENERATE {
        1.0
    } else {
        clamp01((p_mean - e_hat) / den)
    }
}

fn u_from_q(pvals: &PValueSet, q: &[Vec<f64>], d: usize) -> Result<(f64, Vec<f64>)> {
    let m = pvals.len() as f64;
    let mut q_hat = Vec::with_capacity(AVERAGE_GRID.len());
    let mut total = 0.0;
    for (j, &l) in AVERAGE_GRID.iter().enumerate() {
        let qh = conservative_tail_average(&q[j], d)?;
        total += corrected_at(pvals.count_above(l) as f64 / m, l, qh);
        q_hat.push(qh);
    }
    Ok((total / AVERAGE_GRID.len() as f64, q_hat))
}

/// Bias-corrected estimator π̂₀ᵁ.
pub fn pi0_u(pvals: &PValueSet, effects: &EffectSet, initial: &Pi0Estimate) -> Result<Pi0Estimate> {
    pi0_u_with(pvals, effects, initial, None)
}

/// [`pi0_u`] reusing `cache` for the null quantiles.
pub fn pi0_u_with(
    pvals: &PValueSet,
    effects: &EffectSet,
    initial: &Pi0Estimate,
    cache: Option<&mut ModelCache>,
) -> Result<Pi0Estimate> {
    check_aligned(pvals, effects)?;
    let d = assumed_alternatives(pvals.len(), initial.value)?;
    let mut local = ModelCache::new(effects.problem());
    let cache = pick_cache(effects, cache, &mut local)?;
    let q = q_matrix(effects, &AVERAGE_GRID, cache)?;
    let (value, q_hat) = u_from_q(pvals, &q, d)?;
    Ok(Pi0Estimate {
        value,
        method: Pi0Method::BiasCorrectedU,
        diagnostics: Pi0Diagnostics {
            d: Some(d),
            q_hat: Some(q_hat),
            initial: Some(initial.value),
            ..Default::default()
        },
    })
}

/// Bias-corrected estimator π̂₀ᴱ.
pub fn pi0_e(pvals: &PValueSet, effects: &EffectSet, initial: &Pi0Estimate) -> Result<Pi0Estimate> {
    pi0_e_with(pvals, effects, initial, None)
}

/// [`pi0_e`] reusing `cache` for the quadrature quantiles.
pub fn pi0_e_with(
    pvals: &PValueSet,
    effects: &EffectSet,
    initial: &Pi0Estimate,
    cache: Option<&mut ModelCache>,
) -> Result<Pi0Estimate> {
    check_aligned(pvals, effects)?;
    let d = assumed_alternatives(pvals.len(), initial.value)?;
    let mut local = ModelCache::new(effects.problem());
    let cache = pick_cache(effects, cache, &mut local)?;
    let e = expected_values(effects, cache)?;
    let e_hat = conservative_tail_average(&e, d)?;
    Ok(Pi0Estimate {
        value: corrected_mean(pvals.mean(), e_hat),
        method: Pi0Method::BiasCorrectedE,
        diagnostics: Pi0Diagnostics {
            d: Some(d),
            e_hat: Some(e_hat),
            initial: Some(initial.value),
            ..Default::default()
        },
    })
}

fn expected_values(effects: &EffectSet, cache: &mut ModelCache) -> Result<Vec<f64>> {
    effects
        .effects
        .iter()
        .zip(&effects.sizes)
        .map(|(&delta, &s)| cache.get(s)?.expected_p(delta))
        .collect()
}

/// All four estimators compared in the study, sharing one initial estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi0Suite {
    pub bootstrap: Pi0Estimate,
    pub average: Pi0Estimate,
    pub u: Pi0Estimate,
    pub e: Pi0Estimate,
}

impl Pi0Suite {
    pub fn iter(&self) -> impl Iterator<Item = &Pi0Estimate> {
        [&self.bootstrap, &self.average, &self.u, &self.e].into_iter()
    }
}

/// Run the bootstrap, average, U and E estimators; the bootstrap estimate
/// serves as π̂₀ᴵ for U and E.
pub fn estimate_all<R: RngCore + ?Sized>(
    pvals: &PValueSet,
    effects: &EffectSet,
    scheme: BootstrapScheme,
    rng: &mut R,
    cache: &mut ModelCache,
) -> Result<Pi0Suite> {
    let bootstrap = bootstrap_estimate(pvals, scheme, rng)?;
    let average = average_estimator(pvals);
    let u = pi0_u_with(pvals, effects, &bootstrap, Some(&mut *cache))?;
    let e = pi0_e_with(pvals, effects, &bootstrap, Some(cache))?;
    Ok(Pi0Suite {
        bootstrap,
        average,
        u,
        e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrt::expected_nonnull_p;
    use crate::rng::{open_unit, substream};
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(p: &[f64]) -> PValueSet {
        PValueSet::new(p.to_vec()).unwrap()
    }

    fn uniform_p(m: usize, seed: u64) -> PValueSet {
        let mut rng = substream(seed, "unif-p", 0);
        PValueSet::new((0..m).map(|_| open_unit(&mut rng)).collect()).unwrap()
    }

    fn null_effects(m: usize) -> EffectSet {
        EffectSet::uniform(
            vec![1.0; m],
            SampleSizes::One(50),
            TestProblem::OneSampleTwoSided,
        )
        .unwrap()
    }

    fn with_value(v: f64) -> Pi0Estimate {
        Pi0Estimate::plain(v, Pi0Method::StoreyBootstrap)
    }

    #[test]
    fn p_value_set_validation() {
        assert!(PValueSet::new(vec![]).is_err());
        assert!(PValueSet::new(vec![0.5, 0.0]).is_err());
        assert!(PValueSet::new(vec![1.0]).is_err());
        assert!(PValueSet::new(vec![f64::NAN]).is_err());
        assert!(
            EffectSet::uniform(
                vec![1.0, 0.0],
                SampleSizes::One(3),
                TestProblem::OneSampleGreater
            )
            .is_err()
        );
        assert!(EffectSet::new(vec![1.0], vec![], TestProblem::OneSampleGreater).is_err());
    }

    #[test]
    fn storey_counts() {
        assert_eq!(storey_lambda(&pv(&[0.6, 0.7, 0.8, 0.9]), 0.5).unwrap(), 2.0);
        assert_eq!(storey_lambda(&pv(&[0.1, 0.3, 0.6, 0.8]), 0.5).unwrap(), 1.0);
        assert_eq!(storey_lambda(&pv(&[0.1, 0.2]), 0.5).unwrap(), 0.0);
        assert!(storey_lambda(&pv(&[0.1]), 0.0).is_err());
        assert!(storey_lambda(&pv(&[0.1]), 1.0).is_err());
    }

    #[test]
    fn grid_bins_follow_strict_inequality() {
        assert_eq!(grid_bin(0.05), 0);
        assert_eq!(grid_bin(0.050001), 1);
        assert_eq!(grid_bin(0.97), 19);
        assert_eq!(grid_bin(1e-12), 0);
    }

    // direct evaluation: materialize each resample and count against the grid
    fn brute_bootstrap(p: &[f64], b: usize, seed: u64) -> (f64, f64) {
        let m = p.len();
        let mut sorted = p.to_vec();
        sorted.sort_by(f64::total_cmp);
        let est = |s: &[f64], l: f64| {
            let w = s.iter().filter(|&&x| x > l).count() as f64;
            (w / (m as f64 * (1.0 - l))).clamp(0.0, 1.0)
        };
        let full: Vec<f64> = BOOTSTRAP_GRID.iter().map(|&l| est(&sorted, l)).collect();
        let target = full.iter().copied().fold(f64::INFINITY, f64::min);
        let mut rng = substream(seed, "boot", 0);
        let mut mse = vec![0.0; BOOTSTRAP_GRID.len()];
        for _ in 0..b {
            let s: Vec<f64> = (0..m).map(|_| sorted[rng.gen_range(0..m)]).collect();
            for (k, &l) in BOOTSTRAP_GRID.iter().enumerate() {
                mse[k] += (est(&s, l) - target).powi(2);
            }
        }
        let mut best = 0;
        for k in 0..mse.len() {
            if mse[k] < mse[best] {
                best = k;
            }
        }
        (full[best], BOOTSTRAP_GRID[best])
    }

    #[test]
    fn resampling_bootstrap_matches_direct_evaluation() {
        for seed in 0..20 {
            let mut rng = substream(seed, "mix", 0);
            let p: Vec<f64> = (0..60)
                .map(|i| {
                    let u = open_unit(&mut rng);
                    if i % 3 == 0 { u.powi(4) } else { u }
                })
                .collect();
            let (value, lambda) = brute_bootstrap(&p, 30, seed);
            let est = storey_bootstrap(&pv(&p), 30, &mut substream(seed, "boot", 0)).unwrap();
            assert_eq!(est.value, value);
            assert_eq!(est.diagnostics.lambda, Some(lambda));
        }
    }

    #[test]
    fn resampling_bootstrap_degenerate_and_reproducible() {
        let p = pv(&[0.5; 10]);
        let a = storey_bootstrap(&p, 5, &mut substream(1, "b", 0)).unwrap();
        let b = storey_bootstrap(&p, 5, &mut substream(2, "b", 0)).unwrap();
        assert_eq!(a, b);
        // every grid estimate is 1 or 0; the 0 estimates match the target exactly
        assert_eq!(a.value, 0.0);
        assert_eq!(a.diagnostics.lambda, Some(0.5));

        let p = uniform_p(50, 3);
        let x = storey_bootstrap(&p, 1, &mut substream(9, "b", 0)).unwrap();
        let y = storey_bootstrap(&p, 1, &mut substream(9, "b", 0)).unwrap();
        assert_eq!(x, y);
        assert!(storey_bootstrap(&pv(&[0.3]), 10, &mut substream(0, "b", 0)).is_err());
        assert!(storey_bootstrap(&p, 0, &mut substream(0, "b", 0)).is_err());
    }

    #[test]
    fn bootstraps_on_pure_null() {
        // the min-target criterion favours large, noisy λ, so single draws
        // dip below 0.85 now and then; check the typical behaviour instead
        let reps = 60;
        let (mut inside_r, mut inside_a) = (0, 0);
        let (mut sum_r, mut sum_a) = (0.0, 0.0);
        for seed in 0..reps {
            let p = uniform_p(1000, seed);
            let r = storey_bootstrap(&p, 100, &mut substream(seed, "b", 1))
                .unwrap()
                .value;
            let a = storey_bootstrap_analytic(&p).unwrap().value;
            assert!(r <= 1.0 && a <= 1.0);
            inside_r += usize::from(r > 0.85);
            inside_a += usize::from(a > 0.85);
            sum_r += r;
            sum_a += a;
        }
        assert!(inside_r * 10 >= reps as usize * 8, "{inside_r}/{reps}");
        assert!(inside_a * 10 >= reps as usize * 9, "{inside_a}/{reps}");
        assert!(sum_r / reps as f64 > 0.9 && sum_a / reps as f64 > 0.9);
    }

    #[test]
    fn analytic_bootstrap_hand_case() {
        // p = (0.02, 0.04, 0.6, 0.7, 0.8): W = 5 at λ = 0, 3 for λ ∈ [0.05, 0.55], 2, 1, 0 above
        let p = pv(&[0.02, 0.04, 0.6, 0.7, 0.8]);
        let raw: Vec<f64> = BOOTSTRAP_GRID
            .iter()
            .map(|&l| p.count_above(l) as f64 / (5.0 * (1.0 - l)))
            .collect();
        let mut sorted = raw.clone();
        sorted.sort_by(f64::total_cmp);
        // 10% quantile with 20 points sits at position 1.9
        let target = sorted[1] + 0.9 * (sorted[2] - sorted[1]);
        assert!((quantile_type7(&raw, 0.1) - target).abs() < 1e-15);
        let mse: Vec<f64> = BOOTSTRAP_GRID
            .iter()
            .zip(&raw)
            .map(|(&l, &r)| {
                let w = p.count_above(l) as f64;
                w / (25.0 * (1.0 - l).powi(2)) * (1.0 - w / 5.0) + (r - target).powi(2)
            })
            .collect();
        let k = argmin_first(&mse);
        let est = storey_bootstrap_analytic(&p).unwrap();
        assert_eq!(est.value, raw[k].clamp(0.0, 1.0));
    }

    #[test]
    fn average_examples() {
        assert_eq!(average_estimator(&pv(&[0.9; 5])).value, 1.0);
        assert_eq!(average_estimator(&pv(&[0.1; 5])).value, 0.0);
        for seed in 0..5 {
            let v = average_estimator(&uniform_p(1000, seed)).value;
            assert!(v > 0.9 && v <= 1.0, "{v}");
        }
        let p = pv(&[0.1, 0.3, 0.45, 0.6, 0.8]);
        let direct: f64 = AVERAGE_GRID
            .iter()
            .map(|&l| storey_lambda(&p, l).unwrap())
            .sum::<f64>()
            / 7.0;
        assert!((average_estimator(&p).value - direct.clamp(0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn tail_average_examples() {
        assert!((conservative_tail_average(&[0.3, 0.1, 0.2], 2).unwrap() - 0.15).abs() < 1e-15);
        assert!((conservative_tail_average(&[0.3, 0.1, 0.2], 3).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(conservative_tail_average(&[0.3, 0.1], 0).unwrap(), 0.0);
        assert!(conservative_tail_average(&[0.3], 2).is_err());
    }

    #[test]
    fn assumed_alternatives_floor() {
        assert_eq!(assumed_alternatives(100, 0.7).unwrap(), 30);
        assert_eq!(assumed_alternatives(100, 0.3).unwrap(), 70);
        assert_eq!(assumed_alternatives(100, 0.555).unwrap(), 44);
        assert_eq!(assumed_alternatives(7, 0.0).unwrap(), 7);
        assert_eq!(assumed_alternatives(7, 1.0).unwrap(), 0);
        assert!(assumed_alternatives(7, 1.5).is_err());
    }

    #[test]
    fn u_without_alternatives_is_uncorrected() {
        let p = pv(&[0.05, 0.15, 0.22, 0.31, 0.42, 0.58, 0.66, 0.71, 0.83, 0.97]);
        let eff = EffectSet::uniform(
            vec![1.4, 0.8, 1.2, 1.0, 0.9, 1.1, 1.0, 1.3, 0.7, 1.0],
            SampleSizes::One(20),
            TestProblem::OneSampleTwoSided,
        )
        .unwrap();
        let u = pi0_u(&p, &eff, &with_value(1.0)).unwrap();
        let per_lambda: f64 = AVERAGE_GRID
            .iter()
            .map(|&l| storey_lambda(&p, l).unwrap().clamp(0.0, 1.0))
            .sum::<f64>()
            / 7.0;
        assert!((u.value - per_lambda).abs() < 1e-15);
        assert_eq!(u.diagnostics.d, Some(0));
        assert!(u.diagnostics.q_hat.unwrap().iter().all(|&q| q == 0.0));
        // here every per-λ value is below 1, so this is the average estimator too
        assert!((u.value - average_estimator(&p).value).abs() < 1e-15);
    }

    #[test]
    fn null_effects_give_one() {
        let p = uniform_p(40, 11);
        let u = pi0_u(&p, &null_effects(40), &with_value(0.0)).unwrap();
        assert_eq!(u.value, 1.0);
        let e = pi0_e(&p, &null_effects(40), &with_value(0.0)).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn e_without_alternatives_doubles_mean() {
        let p = pv(&[0.1, 0.2, 0.3, 0.2]);
        let eff = EffectSet::uniform(
            vec![1.5; 4],
            SampleSizes::One(10),
            TestProblem::OneSampleGreater,
        )
        .unwrap();
        let e = pi0_e(&p, &eff, &with_value(1.0)).unwrap();
        assert!((e.value - 0.4).abs() < 1e-15);
        assert!((corrected_mean(0.3, 0.1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn e_matches_hand_assembly() {
        let p = pv(&[0.01, 0.02, 0.4, 0.5, 0.7, 0.9]);
        let deltas = [2.5, 1.8, 1.0, 1.1, 1.0, 1.2];
        let sizes = SampleSizes::One(8);
        let eff =
            EffectSet::uniform(deltas.to_vec(), sizes, TestProblem::OneSampleGreater).unwrap();
        let init = with_value(0.6); // d = floor(2.4) = 2
        let est = pi0_e(&p, &eff, &init).unwrap();
        let mut e: Vec<f64> = deltas
            .iter()
            .map(|&d| expected_nonnull_p(TestProblem::OneSampleGreater, d, sizes).unwrap())
            .collect();
        e.sort_by(f64::total_cmp);
        let e_hat = (e[0] + e[1]) / 2.0;
        let want = ((p.mean() - e_hat) / (0.5 - e_hat)).clamp(0.0, 1.0);
        assert!((est.value - want).abs() < 1e-14);
        assert_eq!(est.diagnostics.d, Some(2));
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let p = pv(&[0.1, 0.2]);
        let eff = null_effects(3);
        assert!(pi0_u(&p, &eff, &with_value(0.5)).is_err());
        assert!(pi0_e(&p, &eff, &with_value(0.5)).is_err());
        let mut wrong = ModelCache::new(TestProblem::TwoSampleGreater);
        assert!(pi0_u_with(&p, &null_effects(2), &with_value(0.5), Some(&mut wrong)).is_err());
    }

    #[test]
    fn pure_null_consistency() {
        let m = 5000;
        let p = uniform_p(m, 21);
        let eff = null_effects(m);
        let mut cache = ModelCache::new(TestProblem::OneSampleTwoSided);
        let mut rng = substream(21, "b", 0);
        for scheme in [
            BootstrapScheme::Analytic,
            BootstrapScheme::Resample { replicates: 100 },
        ] {
            let s = estimate_all(&p, &eff, scheme, &mut rng, &mut cache).unwrap();
            for e in s.iter() {
                assert!(e.value >= 0.9, "{:?}: {}", e.method, e.value);
            }
        }
        assert!(storey_lambda_estimate(&p, 0.5).unwrap().value >= 0.9);
    }

    proptest! {
        #[test]
        fn result1_correction_bounded_and_monotone(
            lambda in 0.05f64..0.95,
            frac in 0.0f64..=1.0,
            q1 in 0.0f64..1.0,
            q2 in 0.0f64..1.0,
        ) {
            let w_over_m = frac * (1.0 - lambda);
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let (lo, hi) = (lo * (1.0 - lambda) * 0.999, hi * (1.0 - lambda) * 0.999);
            let raw = |q: f64| (w_over_m - q) / ((1.0 - lambda) - q);
            prop_assert!(raw(lo) <= w_over_m / (1.0 - lambda) + 1e-12);
            prop_assert!(raw(hi) <= raw(lo) + 1e-12);
            prop_assert!(corrected_at(w_over_m, lambda, hi) <= corrected_at(w_over_m, lambda, lo));
        }

        #[test]
        fn result2_correction_monotone(pbar in 0.0f64..=0.5, e1 in 0.0f64..0.5, e2 in 0.0f64..0.5) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(corrected_mean(pbar, hi) <= corrected_mean(pbar, lo));
        }

        #[test]
        fn more_alternatives_never_raise_estimates(
            p in prop::collection::vec(0.001f64..0.999, 5..40),
            seed in any::<u64>(),
        ) {
            let m = p.len();
            let pvals = pv(&p);
            let mut rng = substream(seed, "qm", 0);
            // per-test Q below its null level 1 − λ, and e below 1/2
            let scale: Vec<f64> = (0..m).map(|_| open_unit(&mut rng)).collect();
            let q: Vec<Vec<f64>> = AVERAGE_GRID
                .iter()
                .map(|&l| scale.iter().map(|s| s * (1.0 - l)).collect())
                .collect();
            let e: Vec<f64> = scale.iter().map(|s| 0.5 * s).collect();
            let mut prev_u = f64::INFINITY;
            let mut prev_e = f64::INFINITY;
            for d in 0..=m {
                let (u, _) = u_from_q(&pvals, &q, d).unwrap();
                let ev = corrected_mean(pvals.mean(), conservative_tail_average(&e, d).unwrap());
                prop_assert!(u <= prev_u + 1e-12);
                prop_assert!(ev <= prev_e + 1e-12);
                prev_u = u;
                prev_e = ev;
            }
        }

        #[test]
        fn estimators_in_range_and_order_free(
            entries in prop::collection::vec((0.001f64..0.999, 0.3f64..3.0), 2..30),
            init in 0.0f64..=1.0,
            rot in 0usize..30,
        ) {
            let (p, d): (Vec<f64>, Vec<f64>) = entries.iter().copied().unzip();
            let k = rot % p.len();
            let mut p2 = p.clone();
            let mut d2 = d.clone();
            p2.rotate_left(k);
            d2.rotate_left(k);
            p2.reverse();
            d2.reverse();
            let sizes = SampleSizes::One(6);
            let prob = TestProblem::OneSampleTwoSided;
            let (a, b) = (pv(&p), pv(&p2));
            let (ea, eb) = (
                EffectSet::uniform(d, sizes, prob).unwrap(),
                EffectSet::uniform(d2, sizes, prob).unwrap(),
            );
            let init = with_value(init);
            let pairs = [
                (storey_lambda_estimate(&a, 0.5).unwrap(), storey_lambda_estimate(&b, 0.5).unwrap()),
                (
                    storey_bootstrap(&a, 20, &mut substream(1, "b", 0)).unwrap(),
                    storey_bootstrap(&b, 20, &mut substream(1, "b", 0)).unwrap(),
                ),
                (storey_bootstrap_analytic(&a).unwrap(), storey_bootstrap_analytic(&b).unwrap()),
                (average_estimator(&a), average_estimator(&b)),
                (pi0_u(&a, &ea, &init).unwrap(), pi0_u(&b, &eb, &init).unwrap()),
                (pi0_e(&a, &ea, &init).unwrap(), pi0_e(&b, &eb, &init).unwrap()),
            ];
            for (x, y) in pairs {
                prop_assert!((0.0..=1.0).contains(&x.value));
                prop_assert!((x.value - y.value).abs() < 1e-12, "{:?}", x.method);
            }
        }
    }
}
