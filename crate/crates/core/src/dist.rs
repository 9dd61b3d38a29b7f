//! χ² and F distribution functions, quantiles and the exponential samplers
//! used by the simulation study.
//!
//! The χ² CDF goes through the regularized incomplete gamma function (power
//! series below `a + 1`, continued fraction above) and the F CDF through the
//! regularized incomplete beta function. Both tails are computed directly so
//! small upper-tail probabilities keep their relative accuracy.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::open_unit;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_SERIES: usize = 100_000;
const QUANTILE_TOL: f64 = 1e-12;
const QUANTILE_MAX_ITER: usize = 200;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Null distribution of a test statistic, labelled by integer degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistParams {
    ChiSquared { df: u32 },
    F { d1: u32, d2: u32 },
}

impl DistParams {
    pub fn chi_squared(df: u32) -> Result<Self> {
        if df == 0 {
            return Err(Error::param("chi-square degrees of freedom must be >= 1"));
        }
        Ok(DistParams::ChiSquared { df })
    }

    pub fn f(d1: u32, d2: u32) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::param("F degrees of freedom must be >= 1"));
        }
        Ok(DistParams::F { d1, d2 })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DistParams::ChiSquared { df } => Self::chi_squared(df).map(|_| ()),
            DistParams::F { d1, d2 } => Self::f(d1, d2).map(|_| ()),
        }
    }

    /// Lower-tail probability P(X <= x). Negative `x` gives 0.
    pub fn cdf(&self, x: f64) -> f64 {
        self.tails(x).0
    }

    /// Upper-tail probability P(X > x).
    pub fn sf(&self, x: f64) -> f64 {
        self.tails(x).1
    }

    /// (lower, upper) tail probabilities, each computed without cancellation.
    pub fn tails(&self, x: f64) -> (f64, f64) {
        if x.is_nan() {
            return (f64::NAN, f64::NAN);
        }
        if x <= 0.0 {
            return (0.0, 1.0);
        }
        if x == f64::INFINITY {
            return (1.0, 0.0);
        }
        match *self {
            DistParams::ChiSquared { df } => gamma_inc(0.5 * f64::from(df), 0.5 * x),
            DistParams::F { d1, d2 } => {
                let (d1, d2) = (f64::from(d1), f64::from(d2));
                let num = d1 * x;
                let den = num + d2;
                beta_inc_pair(0.5 * d1, 0.5 * d2, num / den, d2 / den)
            }
        }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            DistParams::ChiSquared { df } => {
                let k = 0.5 * f64::from(df);
                (k - 1.0) * (0.5 * x).ln() - 0.5 * x - ln_gamma(k) - std::f64::consts::LN_2
            }
            DistParams::F { d1, d2 } => {
                let (a, b) = (0.5 * f64::from(d1), 0.5 * f64::from(d2));
                let r = f64::from(d1) / f64::from(d2);
                a * r.ln() + (a - 1.0) * x.ln() - (a + b) * (r * x).ln_1p() - ln_beta(a, b)
            }
        }
    }

    /// Upper-`p` point: the `x` with P(X > x) = p.
    pub fn quantile_upper(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        self.validate()?;
        if p <= 0.5 {
            self.solve(p, Tail::Upper)
        } else {
            self.solve(1.0 - p, Tail::Lower)
        }
    }

    /// Lower-`p` point: the `x` with P(X <= x) = p. Accurate for tiny `p`.
    pub fn quantile_lower(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        self.validate()?;
        if p <= 0.5 {
            self.solve(p, Tail::Lower)
        } else {
            self.solve(1.0 - p, Tail::Upper)
        }
    }

    fn initial_guess(&self, p: f64, tail: Tail) -> f64 {
        // Wilson-Hilferty for chi-square
        let z = match tail {
            Tail::Upper => normal_quantile_upper(p),
            Tail::Lower => -normal_quantile_upper(p),
        };
        let wh = |df: f64| {
            let c = 2.0 / (9.0 * df);
            let v = 1.0 - c + z * c.sqrt();
            (df * v * v * v).max(df * 1e-3)
        };
        match *self {
            DistParams::ChiSquared { df } => wh(f64::from(df)),
            // the bracket search below copes with a crude start
            DistParams::F { .. } => 1.0,
        }
    }

    /// Bracketed Newton on the log tail probability, falling back to bisection.
    fn solve(&self, p: f64, tail: Tail) -> Result<f64> {
        let target = p.ln();
        // h is increasing in x for the lower tail, decreasing for the upper.
        let h = |x: f64| -> f64 {
            let (lo, up) = self.tails(x);
            match tail {
                Tail::Lower => lo.ln() - target,
                Tail::Upper => up.ln() - target,
            }
        };
        let sign = match tail {
            Tail::Lower => 1.0,
            Tail::Upper => -1.0,
        };

        let mut x = self.initial_guess(p, tail);
        if !x.is_finite() || x <= 0.0 {
            x = 1.0;
        }
        // bracket [a, b] with sign * h(a) < 0 < sign * h(b)
        let mut a = 0.0_f64;
        let mut b = x;
        while sign * h(b) < 0.0 {
            a = b;
            b *= 2.0;
            if b > 1e300 {
                return Err(Error::Numeric(format!("no quantile bracket for p={p}")));
            }
        }
        let mut lo_x = x;
        while lo_x > 1e-300 && sign * h(lo_x) > 0.0 {
            b = lo_x;
            lo_x *= 0.5;
        }
        if sign * h(lo_x) <= 0.0 && lo_x > a {
            a = lo_x;
        }
        x = x.clamp(a, b);

        for _ in 0..QUANTILE_MAX_ITER {
            let hx = h(x);
            if hx == 0.0 {
                return Ok(x);
            }
            if sign * hx < 0.0 {
                a = x;
            } else {
                b = x;
            }
            let (lo, up) = self.tails(x);
            let tailp = match tail {
                Tail::Lower => lo,
                Tail::Upper => up,
            };
            // d/dx ln tail = ±pdf / tail
            let slope = sign * (self.ln_pdf(x) - tailp.ln()).exp();
            let mut next = x - hx / slope;
            if !next.is_finite() || next <= a || next >= b {
                next = if a > 0.0 {
                    0.5 * (a + b)
                } else {
                    0.5 * b.min(2.0 * x)
                };
            }
            let step = (next - x).abs();
            x = next;
            if step <= QUANTILE_TOL * x || (b - a) <= QUANTILE_TOL * b {
                return Ok(x);
            }
        }
        Err(Error::Numeric(format!(
            "quantile search did not converge for p={p}"
        )))
    }
}

#[derive(Clone, Copy)]
enum Tail {
    Lower,
    Upper,
}

fn check_prob(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("probability {p} outside (0, 1)")));
    }
    Ok(())
}

/// χ² distribution function F(x) for `df` degrees of freedom.
pub fn chi2_cdf(x: f64, df: u32) -> Result<f64> {
    Ok(DistParams::chi_squared(df)?.cdf(x))
}

/// χ² survival function 1 − F(x), computed without cancellation.
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    Ok(DistParams::chi_squared(df)?.sf(x))
}

/// Upper-`p` point of χ²_df.
pub fn chi2_quantile_upper(p: f64, df: u32) -> Result<f64> {
    DistParams::chi_squared(df)?.quantile_upper(p)
}

/// F distribution function for (d1, d2) degrees of freedom.
pub fn f_cdf(x: f64, d1: u32, d2: u32) -> Result<f64> {
    Ok(DistParams::f(d1, d2)?.cdf(x))
}

pub fn f_sf(x: f64, d1: u32, d2: u32) -> Result<f64> {
    Ok(DistParams::f(d1, d2)?.sf(x))
}

/// Upper-`p` point of F_{d1,d2}.
pub fn f_quantile_upper(p: f64, d1: u32, d2: u32) -> Result<f64> {
    DistParams::f(d1, d2)?.quantile_upper(p)
}

/// Draw from the exponential distribution with the given mean by inversion.
pub fn sample_exponential<R: RngCore + ?Sized>(mean: f64, rng: &mut R) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::param(format!(
            "exponential mean must be > 0, got {mean}"
        )));
    }
    Ok(exponential_from_uniform(mean, open_unit(rng)))
}

pub(crate) fn exponential_from_uniform(mean: f64, u: f64) -> f64 {
    -mean * u.ln()
}

/// Draw from Exp(mean) conditioned on the open interval (lo, hi). `hi` may be infinite.
pub fn sample_truncated_exponential<R: RngCore + ?Sized>(
    mean: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::param(format!(
            "exponential mean must be > 0, got {mean}"
        )));
    }
    if !(lo >= 0.0 && lo < hi) {
        return Err(Error::param(format!(
            "truncation interval ({lo}, {hi}) is empty"
        )));
    }
    if hi == f64::INFINITY {
        return Ok(lo + exponential_from_uniform(mean, open_unit(rng)));
    }
    // mass of Exp(mean) shifted to lo that falls below hi
    let span = -((-(hi - lo) / mean).exp_m1());
    loop {
        let u = open_unit(rng);
        let x = lo - mean * (-u * span).ln_1p();
        if x > lo && x < hi {
            return Ok(x);
        }
    }
}

/// Uniform draw on the open interval (lo, hi).
pub fn sample_uniform<R: RngCore + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param(format!(
            "uniform interval ({lo}, {hi}) is empty"
        )));
    }
    loop {
        let x = lo + (hi - lo) * open_unit(rng);
        if x > lo && x < hi {
            return Ok(x);
        }
    }
}

// ---------------------------------------------------------------------------
// special functions

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Stirling remainder: ln Γ(a+1) − [(a + ½) ln a − a + ln √(2π)].
fn stirling_remainder(a: f64) -> f64 {
    if a > 15.0 {
        let a2 = a * a;
        let s = 1.0 / 1188.0;
        let s = 1.0 / 1680.0 - s / a2;
        let s = 1.0 / 1260.0 - s / a2;
        let s = 1.0 / 360.0 - s / a2;
        let s = 1.0 / 12.0 - s / a2;
        s / a
    } else {
        ln_gamma(a + 1.0) - (a + 0.5) * a.ln() + a - LN_SQRT_2PI
    }
}

/// a·(u − 1 − ln u) with u = x/a, evaluated without cancellation.
fn deviance_term(a: f64, x: f64) -> f64 {
    let t = (x - a) / a;
    if t.abs() < 0.1 {
        // t − ln(1+t) = Σ_{k≥2} (−1)^k t^k / k
        let mut term = t * t;
        let mut sum = 0.0;
        let mut k = 2.0;
        loop {
            let add = term / k;
            sum += add;
            if add.abs() <= EPS * sum.abs() {
                break;
            }
            term *= -t;
            k += 1.0;
        }
        a * sum
    } else {
        a * (t - (x / a).ln())
    }
}

/// x^a e^{−x} / Γ(a + 1), accurate for large `a` near the mode.
fn poisson_kernel(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if a == 0.0 { 1.0 } else { 0.0 };
    }
    if a == 0.0 {
        return (-x).exp();
    }
    if a < 1.0 {
        return (a * x.ln() - x - ln_gamma(a + 1.0)).exp();
    }
    (-stirling_remainder(a) - deviance_term(a, x)).exp() / (2.0 * std::f64::consts::PI * a).sqrt()
}

/// Regularized incomplete gamma pair (P(a, x), Q(a, x)).
pub(crate) fn gamma_inc(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let kernel = poisson_kernel(a, x);
    if x < a + 1.0 {
        // P = kernel · Σ_k x^k / ((a+1)…(a+k))
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut ap = a;
        for _ in 0..MAX_SERIES {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term <= sum * EPS {
                break;
            }
        }
        let p = (kernel * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // Q = a · kernel · CF (modified Lentz)
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_SERIES {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() <= EPS {
                break;
            }
        }
        let q = (a * kernel * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Regularized incomplete beta pair (I_x(a, b), 1 − I_x(a, b)) where `y = 1 − x`
/// is supplied separately to avoid rounding.
pub(crate) fn beta_inc_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = (front * beta_cf(a, b, x, y) / a).min(1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = (front * beta_cf(b, a, y, x) / b).min(1.0);
        (1.0 - upper, upper)
    }
}

fn beta_cf(a: f64, b: f64, x: f64, _y: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_SERIES {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= EPS {
            break;
        }
    }
    h
}

/// Upper-`p` point of the standard normal (Acklam). Only used to seed the
/// quantile search, so ~1e-9 relative accuracy is plenty.
fn normal_quantile_upper(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    // lower quantile of 1 - p
    let lower = |q: f64| -> f64 {
        let plow = 0.02425;
        if q < plow {
            let r = (-2.0 * q.ln()).sqrt();
            (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
                / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
        } else if q <= 1.0 - plow {
            let r = q - 0.5;
            let s = r * r;
            (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
                / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
        } else {
            let r = (-2.0 * (1.0 - q).ln()).sqrt();
            -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
                / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
        }
    };
    // upper p point = -lower(p)
    -lower(p)
}
