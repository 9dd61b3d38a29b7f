//! C ABI over the segfdr library.
//!
//! Every fallible function returns a [`SegfdrStatus`] and writes its result
//! through an out pointer. On failure a message is kept per thread and can be
//! read with [`segfdr_last_error`]. P-value sets and model caches are opaque
//! handles created by `*_new` and released by `*_free`.

use std::cell::RefCell;
use std::ffi::{CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::ptr;

use segfdr::Error;
use segfdr::adaptive_bh::{bh_adjust, reject_at};
use segfdr::dist;
use segfdr::estimators::{
    self, BootstrapScheme, EffectSet, PValueSet, Pi0Estimate, average_estimator, estimate_all,
    storey_bootstrap, storey_bootstrap_analytic, storey_lambda,
};
use segfdr::lrt::{self, ModelCache, SampleSizes, TestProblem};
use segfdr::rng::substream;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegfdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    InvalidInput = 3,
    Numeric = 4,
    Io = 5,
    Panic = 6,
}

/// Which test the p-values and effects come from; pass as the `problem` code.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegfdrProblem {
    OneSampleGreater = 0,
    OneSampleTwoSided = 1,
    TwoSampleGreater = 2,
    TwoSampleTwoSided = 3,
}

// Problems cross the boundary as plain integers so an out-of-range value
// from C is an error rather than an invalid enum.
fn problem(code: u32) -> Result<TestProblem, SegfdrStatus> {
    match code {
        0 => Ok(TestProblem::OneSampleGreater),
        1 => Ok(TestProblem::OneSampleTwoSided),
        2 => Ok(TestProblem::TwoSampleGreater),
        3 => Ok(TestProblem::TwoSampleTwoSided),
        _ => Err(fail(
            SegfdrStatus::InvalidParameter,
            format!("unknown problem code {code}"),
        )),
    }
}

/// p-value and effect estimate of one test.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SegfdrTestResult {
    pub p_value: f64,
    pub effect: f64,
}

/// The four π₀ estimates, all sharing the bootstrap value as initial estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SegfdrPi0Suite {
    pub bootstrap: f64,
    pub average: f64,
    pub u: f64,
    pub e: f64,
}

/// Opaque, validated set of p-values in (0, 1).
pub struct SegfdrPValues {
    inner: PValueSet,
}

/// Opaque cache of per-sample-size quadrature models for one test problem.
/// Reuse it across calls to avoid recomputing quadrature nodes.
pub struct SegfdrModelCache {
    inner: ModelCache,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SegfdrStatus, msg: impl Into<String>) -> SegfdrStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> SegfdrStatus {
    match e {
        Error::InvalidParameter(_) => SegfdrStatus::InvalidParameter,
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Json(_) => SegfdrStatus::InvalidInput,
        Error::Numeric(_) => SegfdrStatus::Numeric,
        Error::Io { .. } => SegfdrStatus::Io,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), SegfdrStatus>) -> SegfdrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SegfdrStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SegfdrStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, SegfdrStatus>;
}

impl<T> OrStatus<T> for segfdr::Result<T> {
    fn or_status(self) -> Result<T, SegfdrStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), SegfdrStatus> {
    if p.is_null() {
        Err(fail(SegfdrStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `data` must be null only when `len` is 0, otherwise valid for `len` reads.
unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], SegfdrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(data, what)?;
    Ok(unsafe { std::slice::from_raw_parts(data, len) })
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn put<T>(out: *mut T, value: T) -> Result<(), SegfdrStatus> {
    non_null(out, "out")?;
    unsafe { out.write(value) };
    Ok(())
}

/// Message for the most recent failure on this thread, or null if the last
/// call succeeded. Valid until the next call into this library on the thread.
#[unsafe(no_mangle)]
pub extern "C" fn segfdr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[unsafe(no_mangle)]
pub extern "C" fn segfdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// P(χ²_df ≤ x).
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_chi2_cdf(x: f64, df: u32, out: *mut f64) -> SegfdrStatus {
    guard(|| unsafe { put(out, dist::chi2_cdf(x, df).or_status()?) })
}

/// P(χ²_df > x).
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_chi2_sf(x: f64, df: u32, out: *mut f64) -> SegfdrStatus {
    guard(|| unsafe { put(out, dist::chi2_sf(x, df).or_status()?) })
}

/// P(F_{d1,d2} ≤ x).
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_f_cdf(x: f64, d1: u32, d2: u32, out: *mut f64) -> SegfdrStatus {
    guard(|| unsafe { put(out, dist::f_cdf(x, d1, d2).or_status()?) })
}

/// P(F_{d1,d2} > x).
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_f_sf(x: f64, d1: u32, d2: u32, out: *mut f64) -> SegfdrStatus {
    guard(|| unsafe { put(out, dist::f_sf(x, d1, d2).or_status()?) })
}

fn to_result(r: lrt::TestResult) -> SegfdrTestResult {
    SegfdrTestResult {
        p_value: r.p_value,
        effect: r.effect,
    }
}

/// Likelihood ratio test of one sample against unit mean. Scale the data by
/// the benchmark mean first.
///
/// # Safety
/// `x` must be valid for `n` reads and `out` for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_lrt_one_sample(
    x: *const f64,
    n: usize,
    two_sided: bool,
    out: *mut SegfdrTestResult,
) -> SegfdrStatus {
    guard(|| unsafe {
        let x = slice(x, n, "x")?;
        put(
            out,
            to_result(lrt::lrt_one_sample(x, two_sided).or_status()?),
        )
    })
}

/// Likelihood ratio test comparing the mean of `y` with the mean of `x`.
///
/// # Safety
/// `x` and `y` must be valid for `nx` and `ny` reads, `out` for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_lrt_two_sample(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    two_sided: bool,
    out: *mut SegfdrTestResult,
) -> SegfdrStatus {
    guard(|| unsafe {
        let x = slice(x, nx, "x")?;
        let y = slice(y, ny, "y")?;
        put(
            out,
            to_result(lrt::lrt_two_sample(x, y, two_sided).or_status()?),
        )
    })
}

fn sizes_for(problem: TestProblem, n1: u32, n2: u32) -> SampleSizes {
    if problem.is_two_sample() {
        SampleSizes::Two { n1, n2 }
    } else {
        SampleSizes::One(n1)
    }
}

/// Probability that a non-null p-value with effect `delta` exceeds `lambda`.
/// `n2` is ignored for one-sample problems.
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_q_upper(
    problem: u32,
    delta: f64,
    lambda: f64,
    n1: u32,
    n2: u32,
    out: *mut f64,
) -> SegfdrStatus {
    guard(|| unsafe {
        let problem = self::problem(problem)?;
        put(
            out,
            lrt::q_upper(problem, delta, lambda, sizes_for(problem, n1, n2)).or_status()?,
        )
    })
}

/// Expected p-value under effect `delta`. `n2` is ignored for one-sample problems.
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_expected_nonnull_p(
    problem: u32,
    delta: f64,
    n1: u32,
    n2: u32,
    out: *mut f64,
) -> SegfdrStatus {
    guard(|| unsafe {
        let problem = self::problem(problem)?;
        put(
            out,
            lrt::expected_nonnull_p(problem, delta, sizes_for(problem, n1, n2)).or_status()?,
        )
    })
}

/// Copy `m` p-values into a new handle. Every value must lie in (0, 1).
///
/// # Safety
/// `p` must be valid for `m` reads and `out` for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pvalues_new(
    p: *const f64,
    m: usize,
    out: *mut *mut SegfdrPValues,
) -> SegfdrStatus {
    guard(|| unsafe {
        non_null(out, "out")?;
        let inner = PValueSet::new(slice(p, m, "p")?.to_vec()).or_status()?;
        put(out, Box::into_raw(Box::new(SegfdrPValues { inner })))
    })
}

/// Release a handle from [`segfdr_pvalues_new`]. Null is ignored.
///
/// # Safety
/// `h` must be null or a live handle, not used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pvalues_free(h: *mut SegfdrPValues) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Number of p-values in the set, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pvalues_len(h: *const SegfdrPValues) -> usize {
    unsafe { h.as_ref() }.map_or(0, |h| h.inner.len())
}

/// # Safety
/// `h` must be null or a live handle.
unsafe fn pvalues<'a>(h: *const SegfdrPValues) -> Result<&'a PValueSet, SegfdrStatus> {
    non_null(h, "p-value handle")?;
    Ok(unsafe { &(*h).inner })
}

/// Storey's estimator at a fixed λ in [0, 1).
///
/// # Safety
/// `h` must be a live handle and `out` valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pi0_storey(
    h: *const SegfdrPValues,
    lambda: f64,
    out: *mut f64,
) -> SegfdrStatus {
    guard(|| unsafe { put(out, storey_lambda(pvalues(h)?, lambda).or_status()?) })
}

/// Bootstrap-tuned Storey estimator. `replicates == 0` selects the exact
/// (closed-form) bootstrap; otherwise resampling with that many draws from `seed`.
///
/// # Safety
/// `h` must be a live handle and `out` valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pi0_bootstrap(
    h: *const SegfdrPValues,
    replicates: usize,
    seed: u64,
    out: *mut f64,
) -> SegfdrStatus {
    guard(|| unsafe {
        let p = pvalues(h)?;
        let est = if replicates == 0 {
            storey_bootstrap_analytic(p)
        } else {
            storey_bootstrap(p, replicates, &mut substream(seed, "pi0", 0))
        };
        put(out, est.or_status()?.value)
    })
}

/// Average of Storey estimates over λ in [0.20, 0.50].
///
/// # Safety
/// `h` must be a live handle and `out` valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pi0_average(
    h: *const SegfdrPValues,
    out: *mut f64,
) -> SegfdrStatus {
    guard(|| unsafe { put(out, average_estimator(pvalues(h)?).value) })
}

/// New model cache for `problem`.
///
/// # Safety
/// `out` must be valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_model_cache_new(
    problem: u32,
    out: *mut *mut SegfdrModelCache,
) -> SegfdrStatus {
    guard(|| unsafe {
        let inner = ModelCache::new(self::problem(problem)?);
        put(out, Box::into_raw(Box::new(SegfdrModelCache { inner })))
    })
}

/// Release a handle from [`segfdr_model_cache_new`]. Null is ignored.
///
/// # Safety
/// `h` must be null or a live handle, not used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_model_cache_free(h: *mut SegfdrModelCache) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// # Safety
/// Pointers as for [`segfdr_pi0_u`].
unsafe fn effect_set(
    cache: &ModelCache,
    m: usize,
    effects: *const f64,
    n1: *const u32,
    n2: *const u32,
) -> Result<EffectSet, SegfdrStatus> {
    let problem = cache.problem();
    let effects = unsafe { slice(effects, m, "effects")? };
    let n1 = unsafe { slice(n1, m, "n1")? };
    let sizes: Vec<SampleSizes> = if problem.is_two_sample() {
        let n2 = unsafe { slice(n2, m, "n2")? };
        n1.iter()
            .zip(n2)
            .map(|(&a, &b)| SampleSizes::Two { n1: a, n2: b })
            .collect()
    } else {
        n1.iter().map(|&n| SampleSizes::One(n)).collect()
    };
    EffectSet::new(effects.to_vec(), sizes, problem).or_status()
}

fn initial_estimate(value: f64) -> Pi0Estimate {
    Pi0Estimate {
        value,
        method: estimators::Pi0Method::StoreyBootstrap,
        diagnostics: Default::default(),
    }
}

type Corrected = fn(
    &PValueSet,
    &EffectSet,
    &Pi0Estimate,
    Option<&mut ModelCache>,
) -> segfdr::Result<Pi0Estimate>;

/// # Safety
/// Pointers as for [`segfdr_pi0_u`].
#[allow(clippy::too_many_arguments)]
unsafe fn corrected(
    f: Corrected,
    cache: *mut SegfdrModelCache,
    h: *const SegfdrPValues,
    effects: *const f64,
    n1: *const u32,
    n2: *const u32,
    initial: f64,
    out: *mut f64,
) -> SegfdrStatus {
    guard(|| unsafe {
        non_null(cache, "model cache")?;
        let cache = &mut (*cache).inner;
        let p = pvalues(h)?;
        let eff = effect_set(cache, p.len(), effects, n1, n2)?;
        let est = f(p, &eff, &initial_estimate(initial), Some(cache)).or_status()?;
        put(out, est.value)
    })
}

/// Bias-corrected estimator U. `effects`, `n1` (and `n2` for two-sample
/// problems) hold one entry per p-value in the same order; `initial` is the
/// initial π₀ estimate, typically from [`segfdr_pi0_bootstrap`].
///
/// # Safety
/// Handles must be live; arrays valid for as many reads as the p-value set
/// has entries; `n2` may be null for one-sample problems; `out` valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pi0_u(
    cache: *mut SegfdrModelCache,
    h: *const SegfdrPValues,
    effects: *const f64,
    n1: *const u32,
    n2: *const u32,
    initial: f64,
    out: *mut f64,
) -> SegfdrStatus {
    unsafe {
        corrected(
            estimators::pi0_u_with,
            cache,
            h,
            effects,
            n1,
            n2,
            initial,
            out,
        )
    }
}

/// Bias-corrected estimator E. Arguments as for [`segfdr_pi0_u`].
///
/// # Safety
/// As for [`segfdr_pi0_u`].
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pi0_e(
    cache: *mut SegfdrModelCache,
    h: *const SegfdrPValues,
    effects: *const f64,
    n1: *const u32,
    n2: *const u32,
    initial: f64,
    out: *mut f64,
) -> SegfdrStatus {
    unsafe {
        corrected(
            estimators::pi0_e_with,
            cache,
            h,
            effects,
            n1,
            n2,
            initial,
            out,
        )
    }
}

/// All four estimators. `replicates` and `seed` select the bootstrap as in
/// [`segfdr_pi0_bootstrap`]; other arguments as for [`segfdr_pi0_u`].
///
/// # Safety
/// As for [`segfdr_pi0_u`].
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_pi0_all(
    cache: *mut SegfdrModelCache,
    h: *const SegfdrPValues,
    effects: *const f64,
    n1: *const u32,
    n2: *const u32,
    replicates: usize,
    seed: u64,
    out: *mut SegfdrPi0Suite,
) -> SegfdrStatus {
    guard(|| unsafe {
        non_null(cache, "model cache")?;
        let cache = &mut (*cache).inner;
        let p = pvalues(h)?;
        let eff = effect_set(cache, p.len(), effects, n1, n2)?;
        let scheme = if replicates == 0 {
            BootstrapScheme::Analytic
        } else {
            BootstrapScheme::Resample { replicates }
        };
        let mut rng = substream(seed, "pi0", 0);
        let s = estimate_all(p, &eff, scheme, &mut rng, cache).or_status()?;
        put(
            out,
            SegfdrPi0Suite {
                bootstrap: s.bootstrap.value,
                average: s.average.value,
                u: s.u.value,
                e: s.e.value,
            },
        )
    })
}

/// Adaptive BH adjusted p-values in input order, capped at 1. `pi0` in (0, 1];
/// pass 1 for the classical procedure. `out` must have room for `out_len`
/// values, at least the size of the set.
///
/// # Safety
/// `h` must be a live handle and `out` valid for `out_len` writes.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_bh_adjust(
    h: *const SegfdrPValues,
    pi0: f64,
    out: *mut f64,
    out_len: usize,
) -> SegfdrStatus {
    guard(|| unsafe {
        let p = pvalues(h)?;
        if out_len < p.len() {
            return Err(fail(
                SegfdrStatus::InvalidParameter,
                format!("output holds {out_len} values, {} needed", p.len()),
            ));
        }
        non_null(out, "out")?;
        let adj = bh_adjust(p, pi0).or_status()?;
        ptr::copy_nonoverlapping(adj.adjusted.as_ptr(), out, adj.adjusted.len());
        Ok(())
    })
}

/// Adaptive BH rejections at level `q`: writes the count to `count` and, when
/// `mask` is not null, 1 or 0 per p-value in input order.
///
/// # Safety
/// `h` must be a live handle, `mask` null or valid for `mask_len` writes,
/// `count` valid for one write.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn segfdr_bh_reject(
    h: *const SegfdrPValues,
    pi0: f64,
    q: f64,
    mask: *mut u8,
    mask_len: usize,
    count: *mut usize,
) -> SegfdrStatus {
    guard(|| unsafe {
        let p = pvalues(h)?;
        non_null(count, "count")?;
        if !(q > 0.0 && q < 1.0) {
            return Err(fail(
                SegfdrStatus::InvalidParameter,
                format!("q must lie in (0, 1), got {q}"),
            ));
        }
        let rej = reject_at(&bh_adjust(p, pi0).or_status()?, q);
        if !mask.is_null() {
            if mask_len < p.len() {
                return Err(fail(
                    SegfdrStatus::InvalidParameter,
                    format!("mask holds {mask_len} entries, {} needed", p.len()),
                ));
            }
            let mask = std::slice::from_raw_parts_mut(mask, p.len());
            mask.fill(0);
            for &i in &rej.rejected {
                mask[i] = 1;
            }
        }
        put(count, rej.len())
    })
}
