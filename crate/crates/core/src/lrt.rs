//! Likelihood-ratio tests for exponential means and the distribution of
//! their p-values away from the null.
//!
//! Four problems are covered: one-sample (θ = 1 against θ > 1 or θ ≠ 1, on
//! data already scaled by the benchmark mean) and two-sample (θ₂ = θ₁
//! against θ₂ > θ₁ or θ₂ ≠ θ₁). For each, the effect size δ labels the
//! non-null law of the p-value; [`q_upper`] gives P(p > λ) under δ and
//! [`expected_nonnull_p`] its mean.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dist::DistParams;
use crate::error::{Error, Result};
use crate::quadrature::unit_rule;

/// Boundary clamp for p-values: results are kept in [ε, 1 − ε].
pub const P_EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestProblem {
    OneSampleGreater,
    OneSampleTwoSided,
    TwoSampleGreater,
    TwoSampleTwoSided,
}

impl TestProblem {
    pub const ALL: [TestProblem; 4] = [
        TestProblem::OneSampleGreater,
        TestProblem::OneSampleTwoSided,
        TestProblem::TwoSampleGreater,
        TestProblem::TwoSampleTwoSided,
    ];

    pub fn is_two_sample(self) -> bool {
        matches!(
            self,
            TestProblem::TwoSampleGreater | TestProblem::TwoSampleTwoSided
        )
    }

    pub fn is_two_sided(self) -> bool {
        matches!(
            self,
            TestProblem::OneSampleTwoSided | TestProblem::TwoSampleTwoSided
        )
    }

    fn check_sizes(self, sizes: SampleSizes) -> Result<()> {
        match (self.is_two_sample(), sizes) {
            (false, SampleSizes::One(n)) if n >= 1 => Ok(()),
            (true, SampleSizes::Two { n1, n2 }) if n1 >= 1 && n2 >= 1 => Ok(()),
            _ => Err(Error::param(format!(
                "sample sizes {sizes:?} do not fit problem {self}"
            ))),
        }
    }
}

impl fmt::Display for TestProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestProblem::OneSampleGreater => "one-sample-greater",
            TestProblem::OneSampleTwoSided => "one-sample-two-sided",
            TestProblem::TwoSampleGreater => "two-sample-greater",
            TestProblem::TwoSampleTwoSided => "two-sample-two-sided",
        })
    }
}

impl FromStr for TestProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestProblem::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::param(format!("unknown test problem '{s}'")))
    }
}

/// Sample size(s) behind one test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSizes {
    One(u32),
    Two { n1: u32, n2: u32 },
}

impl SampleSizes {
    /// Null law of the statistic: χ²_{2n}, or F_{2n₂, 2n₁} for the mean ratio.
    pub fn null_distribution(self) -> Result<DistParams> {
        match self {
            SampleSizes::One(n) => DistParams::chi_squared(2 * n),
            SampleSizes::Two { n1, n2 } => DistParams::f(2 * n2, 2 * n1),
        }
    }
}

/// Raw lifetimes for one segment: a single sample, or a reference sample
/// `x` and a comparison sample `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleData {
    x: Vec<f64>,
    y: Option<Vec<f64>>,
}

impl SampleData {
    pub fn one(x: Vec<f64>) -> Result<Self> {
        check_sample(&x, "sample")?;
        Ok(SampleData { x, y: None })
    }

    pub fn two(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_sample(&x, "first sample")?;
        check_sample(&y, "second sample")?;
        Ok(SampleData { x, y: Some(y) })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    /// Run the likelihood-ratio test for `problem` on this data.
    pub fn test(&self, problem: TestProblem) -> Result<TestResult> {
        match (&self.y, problem.is_two_sample()) {
            (None, false) => lrt_one_sample(&self.x, problem.is_two_sided()),
            (Some(y), true) => lrt_two_sample(&self.x, y, problem.is_two_sided()),
            _ => Err(Error::input(format!(
                "data shape does not match problem {problem}"
            ))),
        }
    }
}

fn check_sample(x: &[f64], what: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::input(format!("{what} is empty")));
    }
    if let Some((i, v)) = x
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::input(format!(
            "{what} value {v} at position {i} is not a positive finite number"
        )));
    }
    Ok(())
}

/// Outcome of one segment's test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub p_value: f64,
    /// Estimated effect size δ̂.
    pub effect: f64,
    pub sizes: SampleSizes,
    pub problem: TestProblem,
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(P_EPSILON, 1.0 - P_EPSILON)
}

/// p-value from the null tail pair (P(T ≤ t), P(T > t)).
fn p_from_tails(lower: f64, upper: f64, two_sided: bool) -> f64 {
    let p = if two_sided {
        2.0 * upper.min(lower)
    } else {
        upper
    };
    clamp_p(p)
}

/// One-sample test of θ = 1 on pre-scaled data, using T = 2Σxᵢ ~ θχ²_{2n}.
pub fn lrt_one_sample(x: &[f64], two_sided: bool) -> Result<TestResult> {
    check_sample(x, "sample")?;
    let n = u32::try_from(x.len()).map_err(|_| Error::input("sample too large"))?;
    let dist = DistParams::chi_squared(2 * n)?;
    let sum: f64 = x.iter().sum();
    let t = 2.0 * sum;
    let p_value = p_from_tails(dist.cdf(t), dist.sf(t), two_sided);
    let mean = sum / f64::from(n);
    // one-sided estimates are held at the null from below: the alternative is θ > 1
    let effect = if two_sided { mean } else { mean.max(1.0) };
    Ok(TestResult {
        p_value,
        effect,
        sizes: SampleSizes::One(n),
        problem: if two_sided {
            TestProblem::OneSampleTwoSided
        } else {
            TestProblem::OneSampleGreater
        },
    })
}

/// Two-sample test of θ₂ = θ₁ using the mean ratio T = ȳ / x̄ ~ (θ₂/θ₁) F_{2n₂, 2n₁}.
pub fn lrt_two_sample(x: &[f64], y: &[f64], two_sided: bool) -> Result<TestResult> {
    check_sample(x, "first sample")?;
    check_sample(y, "second sample")?;
    let n1 = u32::try_from(x.len()).map_err(|_| Error::input("sample too large"))?;
    let n2 = u32::try_from(y.len()).map_err(|_| Error::input("sample too large"))?;
    let dist = DistParams::f(2 * n2, 2 * n1)?;
    let xbar = x.iter().sum::<f64>() / f64::from(n1);
    let ybar = y.iter().sum::<f64>() / f64::from(n2);
    let t = ybar / xbar;
    let p_value = p_from_tails(dist.cdf(t), dist.sf(t), two_sided);
    // E[T] = δ n₁/(n₁ − 1); a single reference observation leaves only the MLE
    let unbiased = if n1 >= 2 {
        t * f64::from(n1 - 1) / f64::from(n1)
    } else {
        t
    };
    let effect = if two_sided {
        unbiased
    } else {
        unbiased.max(1.0)
    };
    Ok(TestResult {
        p_value,
        effect,
        sizes: SampleSizes::Two { n1, n2 },
        problem: if two_sided {
            TestProblem::TwoSampleTwoSided
        } else {
            TestProblem::TwoSampleGreater
        },
    })
}

/// Statistic cut points that map p > λ onto an interval of the null law.
#[derive(Debug, Clone, Copy)]
struct Cut {
    /// Upper-λ point (one-sided) or upper-λ/2 point (two-sided).
    upper: f64,
    /// Lower-λ/2 point; zero for one-sided problems.
    lower: f64,
}

/// The non-null p-value law for one (problem, sample sizes) pair, with the
/// null quantiles needed for quadrature cached on first use.
#[derive(Debug)]
pub struct NonNullModel {
    problem: TestProblem,
    dist: DistParams,
    quad_cuts: OnceLock<Result<Vec<Cut>>>,
}

impl NonNullModel {
    pub fn new(problem: TestProblem, sizes: SampleSizes) -> Result<Self> {
        problem.check_sizes(sizes)?;
        Ok(NonNullModel {
            problem,
            dist: sizes.null_distribution()?,
            quad_cuts: OnceLock::new(),
        })
    }

    fn cut(&self, lambda: f64) -> Result<Cut> {
        if self.problem.is_two_sided() {
            Ok(Cut {
                upper: self.dist.quantile_upper(0.5 * lambda)?,
                lower: self.dist.quantile_lower(0.5 * lambda)?,
            })
        } else {
            Ok(Cut {
                upper: self.dist.quantile_upper(lambda)?,
                lower: 0.0,
            })
        }
    }

    fn tail_at(&self, cut: Cut, delta: f64) -> f64 {
        let (hi_lo, hi_up) = self.dist.tails(cut.upper / delta);
        let q = if cut.lower > 0.0 {
            let (lo_lo, lo_up) = self.dist.tails(cut.lower / delta);
            // take the difference on whichever side keeps the magnitudes small
            if hi_lo < 0.5 {
                hi_lo - lo_lo
            } else {
                lo_up - hi_up
            }
        } else {
            hi_lo
        };
        q.clamp(0.0, 1.0)
    }

    /// Q_δ(λ) = P(p > λ) for a test with effect size δ.
    pub fn q_upper(&self, delta: f64, lambda: f64) -> Result<f64> {
        check_delta(delta)?;
        check_lambda(lambda)?;
        Ok(self.tail_at(self.cut(lambda)?, delta))
    }

    /// Q_δ(λ) for every λ in `lambdas`, for each δ in `deltas` (row-major by δ).
    pub fn q_upper_grid(&self, deltas: &[f64], lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
        for &l in lambdas {
            check_lambda(l)?;
        }
        let cuts = lambdas
            .iter()
            .map(|&l| self.cut(l))
            .collect::<Result<Vec<_>>>()?;
        deltas
            .iter()
            .map(|&d| {
                check_delta(d)?;
                Ok(cuts.iter().map(|&c| self.tail_at(c, d)).collect())
            })
            .collect()
    }

    /// e_δ = E[p] under effect δ, as ∫₀¹ Q_δ(λ) dλ.
    pub fn expected_p(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        let cuts = self
            .quad_cuts
            .get_or_init(|| {
                unit_rule()
                    .nodes
                    .iter()
                    .map(|&l| self.cut(l))
                    .collect::<Result<Vec<_>>>()
            })
            .as_ref()
            .map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(cuts
            .iter()
            .zip(&unit_rule().weights)
            .map(|(&c, &w)| w * self.tail_at(c, delta))
            .sum())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(format!(
            "effect size must be > 0, got {delta}"
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param(format!("lambda {lambda} outside (0, 1)")));
    }
    Ok(())
}

/// P(p > λ) for a non-null test with effect size `delta`.
pub fn q_upper(problem: TestProblem, delta: f64, lambda: f64, sizes: SampleSizes) -> Result<f64> {
    NonNullModel::new(problem, sizes)?.q_upper(delta, lambda)
}

/// Expected p-value of a non-null test with effect size `delta`.
pub fn expected_nonnull_p(problem: TestProblem, delta: f64, sizes: SampleSizes) -> Result<f64> {
    NonNullModel::new(problem, sizes)?.expected_p(delta)
}

/// Models keyed by sample sizes, built on demand.
#[derive(Debug)]
pub struct ModelCache {
    problem: TestProblem,
    models: HashMap<SampleSizes, NonNullModel>,
}

impl ModelCache {
    pub fn new(problem: TestProblem) -> Self {
        ModelCache {
            problem,
            models: HashMap::new(),
        }
    }

    pub fn problem(&self) -> TestProblem {
        self.problem
    }

    pub fn get(&mut self, sizes: SampleSizes) -> Result<&NonNullModel> {
        if !self.models.contains_key(&sizes) {
            let model = NonNullModel::new(self.problem, sizes)?;
            self.models.insert(sizes, model);
        }
        Ok(&self.models[&sizes])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{chi2_cdf, f_cdf, sample_exponential};
    use crate::rng::substream;

    const LAMBDA_GRID: [f64; 19] = [
        0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8,
        0.85, 0.9, 0.95,
    ];

    fn sizes_for(problem: TestProblem) -> SampleSizes {
        if problem.is_two_sample() {
            SampleSizes::Two { n1: 12, n2: 9 }
        } else {
            SampleSizes::One(15)
        }
    }

    #[test]
    fn one_sided_p_closed_form() {
        let l2 = 2f64.ln();
        let r = lrt_one_sample(&[l2, l2], false).unwrap();
        let expected = 0.25 * (1.0 + 2.0 * l2);
        assert!((r.p_value - expected).abs() < 1e-14);
        assert!((expected - 0.596_573_590_279_972_6).abs() < 1e-15);
        assert!((r.p_value - (1.0 - chi2_cdf(4.0 * l2, 4).unwrap())).abs() < 1e-14);
        assert_eq!(r.effect, 1.0);
        assert_eq!(r.sizes, SampleSizes::One(2));
    }

    #[test]
    fn two_sided_at_null_median_clamps() {
        let n = 3;
        let median = crate::dist::chi2_quantile_upper(0.5, 2 * n).unwrap();
        let x = vec![median / (2.0 * f64::from(n)); n as usize];
        let r = lrt_one_sample(&x, true).unwrap();
        assert!(r.p_value <= 1.0 - P_EPSILON && r.p_value > 1.0 - 1e-9);
    }

    #[test]
    fn one_sample_effects() {
        let x = [0.5, 0.7, 0.3];
        let two = lrt_one_sample(&x, true).unwrap();
        assert!((two.effect - 0.5).abs() < 1e-15);
        let one = lrt_one_sample(&x, false).unwrap();
        assert_eq!(one.effect, 1.0);
        let big = lrt_one_sample(&[2.0, 4.0], false).unwrap();
        assert_eq!(big.effect, 3.0);
    }

    #[test]
    fn bad_samples_rejected() {
        assert!(lrt_one_sample(&[], true).is_err());
        assert!(lrt_one_sample(&[1.0, 0.0], true).is_err());
        assert!(lrt_one_sample(&[1.0, -2.0], false).is_err());
        assert!(lrt_two_sample(&[], &[1.0], true).is_err());
        assert!(lrt_two_sample(&[1.0], &[], true).is_err());
        assert!(SampleData::one(vec![]).is_err());
        let d = SampleData::one(vec![1.0]).unwrap();
        assert!(d.test(TestProblem::TwoSampleGreater).is_err());
    }

    #[test]
    fn identical_samples_sit_at_the_boundary() {
        let x = [0.4, 1.3, 2.2, 0.9];
        let r = lrt_two_sample(&x, &x, true).unwrap();
        assert!((r.effect - 0.75).abs() < 1e-15);
        assert!(r.p_value > 1.0 - 1e-9 && r.p_value <= 1.0 - P_EPSILON);
    }

    #[test]
    fn two_sample_f22_closed_form() {
        let r = lrt_two_sample(&[1.0], &[3.0], false).unwrap();
        assert!((r.p_value - 0.25).abs() < 1e-14);
        assert!((r.p_value - (1.0 - f_cdf(3.0, 2, 2).unwrap())).abs() < 1e-14);
    }

    #[test]
    fn two_sample_uses_mean_ratio() {
        // unequal sizes: T = ȳ/x̄ = 2 regardless of n
        let r = lrt_two_sample(&[1.0, 1.0, 1.0, 1.0], &[2.0, 2.0], true).unwrap();
        assert!((r.effect - 2.0 * 0.75).abs() < 1e-15);
        let dist = DistParams::f(4, 8).unwrap();
        assert!((r.p_value - 2.0 * dist.sf(2.0)).abs() < 1e-14);
    }

    #[test]
    fn null_q_is_one_minus_lambda() {
        for problem in TestProblem::ALL {
            let m = NonNullModel::new(problem, sizes_for(problem)).unwrap();
            for &l in &LAMBDA_GRID {
                let q = m.q_upper(1.0, l).unwrap();
                assert!((q - (1.0 - l)).abs() < 1e-10, "{problem} λ={l}: {q}");
            }
        }
    }

    #[test]
    fn null_expected_p_is_half() {
        for problem in TestProblem::ALL {
            let e = expected_nonnull_p(problem, 1.0, sizes_for(problem)).unwrap();
            assert!((e - 0.5).abs() < 1e-8, "{problem}: {e}");
        }
    }

    #[test]
    fn df2_closed_forms() {
        let sizes = SampleSizes::One(1);
        let q = q_upper(TestProblem::OneSampleGreater, 2.0, 0.25, sizes).unwrap();
        assert!((q - 0.5).abs() < 1e-12);
        for &delta in &[1.5, 2.0, 3.0, 10.0] {
            for &l in &LAMBDA_GRID {
                let q = q_upper(TestProblem::OneSampleGreater, delta, l, sizes).unwrap();
                assert!((q - (1.0 - l.powf(1.0 / delta))).abs() < 1e-11);
            }
            let e = expected_nonnull_p(TestProblem::OneSampleGreater, delta, sizes).unwrap();
            assert!((e - 1.0 / (1.0 + delta)).abs() < 1e-9, "δ={delta}: {e}");
        }
    }

    #[test]
    fn one_sided_q_decreases_in_delta() {
        for problem in [TestProblem::OneSampleGreater, TestProblem::TwoSampleGreater] {
            let m = NonNullModel::new(problem, sizes_for(problem)).unwrap();
            for &l in &LAMBDA_GRID {
                let mut prev = m.q_upper(1.0, l).unwrap();
                for k in 1..30 {
                    let q = m.q_upper(1.0 + 0.05 * k as f64, l).unwrap();
                    assert!(q < prev, "{problem} λ={l}");
                    prev = q;
                }
            }
        }
    }

    #[test]
    fn q_decreases_in_lambda() {
        for problem in TestProblem::ALL {
            let m = NonNullModel::new(problem, sizes_for(problem)).unwrap();
            for &delta in &[0.6, 0.9, 1.0, 1.3, 2.0] {
                let row = &m.q_upper_grid(&[delta], &LAMBDA_GRID).unwrap()[0];
                assert!(row.windows(2).all(|w| w[1] < w[0]), "{problem} δ={delta}");
            }
        }
    }

    #[test]
    fn two_sided_expected_p_below_half() {
        for problem in [
            TestProblem::OneSampleTwoSided,
            TestProblem::TwoSampleTwoSided,
        ] {
            let m = NonNullModel::new(problem, sizes_for(problem)).unwrap();
            for &delta in &[0.3, 0.7, 0.95, 1.05, 1.4, 3.0] {
                assert!(m.expected_p(delta).unwrap() < 0.5, "{problem} δ={delta}");
            }
        }
    }

    #[test]
    fn quadrature_matches_fine_trapezoid() {
        for problem in TestProblem::ALL {
            let m = NonNullModel::new(problem, sizes_for(problem)).unwrap();
            for &delta in &[0.7, 1.3] {
                let n = 10_000;
                let grid: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
                let q = &m.q_upper_grid(&[delta], &grid).unwrap()[0];
                // endpoints: Q(0) = 1, Q(1) = 0
                let h = 1.0 / n as f64;
                let trap = h * (0.5 * 1.0 + q.iter().sum::<f64>() + 0.5 * 0.0);
                let quad = m.expected_p(delta).unwrap();
                assert!(
                    (trap - quad).abs() < 1e-6,
                    "{problem} δ={delta}: {trap} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn invalid_parameters() {
        let s = SampleSizes::One(5);
        assert!(q_upper(TestProblem::OneSampleGreater, 0.0, 0.5, s).is_err());
        assert!(q_upper(TestProblem::OneSampleGreater, 1.0, 1.0, s).is_err());
        assert!(q_upper(TestProblem::TwoSampleGreater, 1.0, 0.5, s).is_err());
        assert!(expected_nonnull_p(TestProblem::OneSampleTwoSided, -1.0, s).is_err());
    }

    #[test]
    fn problem_names_round_trip() {
        for p in TestProblem::ALL {
            assert_eq!(p.to_string().parse::<TestProblem>().unwrap(), p);
        }
        assert!("bogus".parse::<TestProblem>().is_err());
    }

    #[test]
    fn simulated_tail_probability_matches_closed_form() {
        let n = 10usize;
        let m =
            NonNullModel::new(TestProblem::OneSampleTwoSided, SampleSizes::One(n as u32)).unwrap();
        let (delta, lambda) = (1.4, 0.3);
        let q = m.q_upper(delta, lambda).unwrap();
        let reps = 200_000;
        let mut rng = substream(5, "q-mc", 0);
        let mut hits = 0;
        for _ in 0..reps {
            let x: Vec<f64> = (0..n)
                .map(|_| sample_exponential(delta, &mut rng).unwrap())
                .collect();
            if lrt_one_sample(&x, true).unwrap().p_value > lambda {
                hits += 1;
            }
        }
        let phat = f64::from(hits) / f64::from(reps);
        let se = (q * (1.0 - q) / f64::from(reps)).sqrt();
        assert!((phat - q).abs() < 3.0 * se, "{phat} vs {q}");
    }
}
