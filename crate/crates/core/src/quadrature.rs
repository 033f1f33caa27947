//! Semi-infinite quadrature for integrands of the form `f(w) * k(w t)` where
//! `f` behaves like `w^(a-1) ln^k(1/w)` at the origin and decays
//! exponentially, algebraically, or has compact support at large `w`.
//!
//! Two regimes:
//!
//! * few kernel periods over the effective support: a tanh-sinh panel at the
//!   origin followed by adaptive Gauss-Kronrod (or a tanh-sinh rule on the
//!   inverted tail `w = s / x` when the support is unbounded);
//! * many periods: the range is partitioned at the zeros of the kernel, the
//!   first panel is again tanh-sinh, later panels are Gauss-Kronrod, and the
//!   alternating partial sums are accelerated by iterated averaging.
//!
//! Global evaluation counters back the CLI's `--quadrature-stats` flag.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Default relative tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Default evaluation budget per integral.
pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Periods over the effective support below which the plain panel strategy is used.
const OSCILLATION_THRESHOLD: f64 = 8.0;
/// Order of the iterated averaging applied to partial sums.
const AVERAGING_ORDER: usize = 12;

static INTEGRALS: AtomicU64 = AtomicU64::new(0);
static EVALUATIONS: AtomicU64 = AtomicU64::new(0);
static FAILURES: AtomicU64 = AtomicU64::new(0);
static OSCILLATORY: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadratureStats {
    pub integrals: u64,
    pub evaluations: u64,
    pub failures: u64,
    pub oscillatory: u64,
}

/// Snapshot of the process-wide counters.
pub fn stats() -> QuadratureStats {
    QuadratureStats {
        integrals: INTEGRALS.load(Ordering::Relaxed),
        evaluations: EVALUATIONS.load(Ordering::Relaxed),
        failures: FAILURES.load(Ordering::Relaxed),
        oscillatory: OSCILLATORY.load(Ordering::Relaxed),
    }
}

pub fn reset_stats() {
    INTEGRALS.store(0, Ordering::Relaxed);
    EVALUATIONS.store(0, Ordering::Relaxed);
    FAILURES.store(0, Ordering::Relaxed);
    OSCILLATORY.store(0, Ordering::Relaxed);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Cosine,
    Sine,
    /// `1 - cos(w t)`, evaluated as `2 sin^2(w t / 2)`.
    Versine,
    None,
}

impl Kernel {
    fn eval(self, x: f64) -> f64 {
        match self {
            Kernel::Cosine => x.cos(),
            Kernel::Sine => x.sin(),
            Kernel::Versine => {
                let s = (0.5 * x).sin();
                2.0 * s * s
            }
            Kernel::None => 1.0,
        }
    }

    /// Smallest endpoint exponent `e` (integrand ~ `w^e`) that keeps the
    /// weighted integrand integrable at the origin.
    fn min_endpoint_exponent(self) -> f64 {
        match self {
            Kernel::Cosine | Kernel::None => -1.0,
            Kernel::Sine => -2.0,
            Kernel::Versine => -3.0,
        }
    }
}

/// Large-frequency behaviour of the integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// `f(w) ~ w^p exp(-w / scale)`.
    Exponential { scale: f64 },
    /// `f(w) = O(w^-exponent)`.
    Algebraic { exponent: f64 },
    /// `f(w) = 0` for `w > end`.
    Compact { end: f64 },
}

/// How the integration range is split: a characteristic frequency for the
/// origin panel and the tail description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub scale: f64,
    pub tail: Tail,
}

impl Partition {
    pub fn exponential(scale: f64) -> Self {
        Partition {
            scale,
            tail: Tail::Exponential { scale },
        }
    }

    pub fn compact(end: f64) -> Self {
        Partition {
            scale: end,
            tail: Tail::Compact { end },
        }
    }

    pub fn algebraic(scale: f64, exponent: f64) -> Self {
        Partition {
            scale,
            tail: Tail::Algebraic { exponent },
        }
    }

    /// Upper end of the effective support for exponential or compact tails.
    /// For exponential decay the envelope bound is pushed below `tol / 100`.
    fn effective_upper(&self, endpoint_exponent: f64, tolerance: f64) -> Option<f64> {
        match self.tail {
            Tail::Compact { end } => Some(end),
            Tail::Exponential { scale } => {
                let log_inv_tol = (100.0 / tolerance).ln().max(1.0);
                let power = (endpoint_exponent + 3.0).max(0.0);
                Some(scale * (log_inv_tol + power * (log_inv_tol + std::f64::consts::E).ln()))
            }
            Tail::Algebraic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Exact zero (sine or versine kernel at `t = 0`).
    Trivial,
    /// Tanh-sinh origin panel plus Gauss-Kronrod / inverted tanh-sinh tail.
    Panels,
    /// Kernel-zero partition summed up to the end of the effective support.
    ZeroPartitionDirect,
    /// Kernel-zero partition with iterated averaging of partial sums.
    ZeroPartitionAccelerated,
    /// Trapezoid rule after the substitution `w = s exp(u)`.
    ExpSubstitution,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Strategy::Trivial => "trivial",
            Strategy::Panels => "panels",
            Strategy::ZeroPartitionDirect => "zero-partition",
            Strategy::ZeroPartitionAccelerated => "zero-partition-accelerated",
            Strategy::ExpSubstitution => "exp-substitution",
        };
        f.write_str(name)
    }
}

pub type Integrand<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

#[derive(Clone, Copy)]
pub struct QuadratureRequest<'a> {
    pub integrand: Integrand<'a>,
    pub kernel: Kernel,
    pub t: f64,
    /// Exponent `e` of the leading behaviour `f(w) ~ w^e` at the origin.
    pub endpoint_exponent: f64,
    pub tolerance: f64,
    pub partition: Partition,
    pub budget: usize,
}

impl<'a> QuadratureRequest<'a> {
    pub fn new(integrand: Integrand<'a>, kernel: Kernel, t: f64, partition: Partition) -> Self {
        QuadratureRequest {
            integrand,
            kernel,
            t,
            endpoint_exponent: 0.0,
            tolerance: DEFAULT_TOLERANCE,
            partition,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn endpoint_exponent(mut self, exponent: f64) -> Self {
        self.endpoint_exponent = exponent;
        self
    }

    pub fn tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

impl std::fmt::Debug for QuadratureRequest<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadratureRequest")
            .field("kernel", &self.kernel)
            .field("t", &self.t)
            .field("endpoint_exponent", &self.endpoint_exponent)
            .field("tolerance", &self.tolerance)
            .field("partition", &self.partition)
            .field("budget", &self.budget)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub strategy: Strategy,
}

/// Running estimate from one of the building-block rules.
#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    value: f64,
    error: f64,
    /// Integral of `|f|`, the natural scale for rounding floors.
    magnitude: f64,
    evals: usize,
}

impl Partial {
    fn add(self, other: Partial) -> Partial {
        Partial {
            value: self.value + other.value,
            error: self.error + other.error,
            magnitude: self.magnitude + other.magnitude,
            evals: self.evals + other.evals,
        }
    }
}

struct Budget {
    remaining: usize,
}

impl Budget {
    fn take(&mut self, n: usize) -> bool {
        if n > self.remaining {
            self.remaining = 0;
            false
        } else {
            self.remaining -= n;
            true
        }
    }
}

fn quadrature_error(message: &str, partial: &Partial) -> Error {
    FAILURES.fetch_add(1, Ordering::Relaxed);
    Error::Quadrature {
        message: message.to_string(),
        partial: partial.value,
        error_estimate: partial.error,
    }
}

// ---------------------------------------------------------------------------
// Gauss-Kronrod 10/21

#[allow(clippy::excessive_precision)]
const XGK21: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG10: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK21: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

fn finite_or_zero(y: f64) -> f64 {
    if y.is_finite() {
        y
    } else {
        0.0
    }
}

/// Single 21-point Kronrod panel with the QUADPACK error heuristic.
fn gk21(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Partial {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = finite_or_zero(f(center));
    let mut kronrod = fc * WGK21[10];
    let mut gauss = 0.0;
    let mut resabs = kronrod.abs();
    let mut fv = [(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = half * XGK21[j];
        let f1 = finite_or_zero(f(center - dx));
        let f2 = finite_or_zero(f(center + dx));
        fv[j] = (f1, f2);
        kronrod += WGK21[j] * (f1 + f2);
        resabs += WGK21[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG10[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK21[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK21[j] * ((fv[j].0 - mean).abs() + (fv[j].1 - mean).abs());
    }
    let value = kronrod * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Partial {
        value,
        error,
        magnitude: resabs,
        evals: 21,
    }
}

/// Globally adaptive Gauss-Kronrod on `[a, b]`.
fn adaptive_gk(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    budget: &mut Budget,
) -> std::result::Result<Partial, Partial> {
    let first = gk21(f, a, b);
    if !budget.take(first.evals) {
        return Err(first);
    }
    let mut intervals = vec![(a, b, first)];
    let mut total = first;
    loop {
        let target = abs_tol.max(rel_tol * total.value.abs());
        // below the summed roundoff floor further bisection cannot help
        if total.error <= target || total.error <= 100.0 * f64::EPSILON * total.magnitude {
            return Ok(total);
        }
        // bisect the worst interval
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("non-empty");
        let (lo, hi, worst) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || !budget.take(42) {
            intervals.push((lo, hi, worst));
            return Err(total);
        }
        let left = gk21(f, lo, mid);
        let right = gk21(f, mid, hi);
        total.value += left.value + right.value - worst.value;
        total.error += left.error + right.error - worst.error;
        total.magnitude += left.magnitude + right.magnitude - worst.magnitude;
        total.evals += 42;
        intervals.push((lo, mid, left));
        intervals.push((mid, hi, right));
        if intervals.len() > 4096 {
            return Err(total);
        }
    }
}

// ---------------------------------------------------------------------------
// Tanh-sinh

const TANH_SINH_MAX_LEVEL: usize = 9;
const TANH_SINH_T_MAX: f64 = 6.5;

/// Tanh-sinh on `[a, b]`; tolerates integrable singularities at both ends.
/// Node distances from the endpoints are computed in complement form so that
/// nodes within `1e-300` of an endpoint are still distinct from it.
fn tanh_sinh(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    budget: &mut Budget,
) -> std::result::Result<Partial, Partial> {
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    // contribution of the node pair at parameter tau: (sum, abs sum)
    let pair = |tau: f64| -> (f64, f64) {
        let y = 0.5 * PI * tau.sinh();
        let e = (-2.0 * y).exp();
        let complement = 2.0 * e / (1.0 + e); // 1 - tanh(y)
        let weight = 0.5 * PI * tau.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        let dx = half * complement;
        let mut s = 0.0;
        let mut m = 0.0;
        if dx > 0.0 {
            let xl = a + dx;
            let xr = b - dx;
            if xl > a && xl < b {
                let v = finite_or_zero(f(xl));
                s += v;
                m += v.abs();
            }
            if xr < b && xr > a {
                let v = finite_or_zero(f(xr));
                s += v;
                m += v.abs();
            }
        }
        (weight * s, weight * m)
    };

    let f0 = finite_or_zero(f(center));
    let mut sum = 0.5 * PI * f0;
    let mut abs_sum = sum.abs();
    let mut h = 1.0;
    let mut evals = 1;
    let mut tau = h;
    while tau <= TANH_SINH_T_MAX {
        let (s, m) = pair(tau);
        sum += s;
        abs_sum += m;
        evals += 2;
        tau += h;
    }
    let mut estimate = half * h * sum;
    let mut prev_delta = f64::INFINITY;
    let mut result = Partial {
        value: estimate,
        error: f64::INFINITY,
        magnitude: half.abs() * h * abs_sum,
        evals,
    };
    if !budget.take(evals) {
        return Err(result);
    }
    for level in 1..=TANH_SINH_MAX_LEVEL {
        h *= 0.5;
        let mut new_sum = 0.0;
        let mut new_abs = 0.0;
        let mut level_evals = 0;
        let mut tau = h;
        while tau <= TANH_SINH_T_MAX {
            let (s, m) = pair(tau);
            new_sum += s;
            new_abs += m;
            level_evals += 2;
            tau += 2.0 * h;
        }
        if !budget.take(level_evals) {
            return Err(result);
        }
        sum += new_sum;
        abs_sum += new_abs;
        evals += level_evals;
        let next = half * h * sum;
        let delta = (next - estimate).abs();
        estimate = next;
        let magnitude = half.abs() * h * abs_sum;
        let floor = 20.0 * f64::EPSILON * magnitude;
        // quadratic convergence: the next correction is roughly delta^2 / prev_delta
        let predicted = if prev_delta.is_finite() && prev_delta > 0.0 {
            (delta * delta / prev_delta).min(delta)
        } else {
            delta
        };
        let error = predicted.max(floor);
        result = Partial {
            value: estimate,
            error,
            magnitude,
            evals,
        };
        let target = abs_tol.max(rel_tol * estimate.abs());
        if level >= 3 && (delta <= target || delta <= floor) {
            return Ok(result);
        }
        prev_delta = delta;
    }
    if result.error <= abs_tol.max(rel_tol * result.value.abs()) * 10.0 {
        Ok(result)
    } else {
        Err(result)
    }
}

/// `int_s^inf f(w) dw` via `w = s / x`, tanh-sinh on `(0, 1]`.
fn inverted_tail(
    f: &dyn Fn(f64) -> f64,
    s: f64,
    rel_tol: f64,
    abs_tol: f64,
    budget: &mut Budget,
) -> std::result::Result<Partial, Partial> {
    let mapped = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let w = s / x;
        if !w.is_finite() {
            return 0.0;
        }
        f(w) * s / (x * x)
    };
    tanh_sinh(&mapped, 0.0, 1.0, rel_tol, abs_tol, budget)
}

// ---------------------------------------------------------------------------
// Public entry points

fn validate(req: &QuadratureRequest<'_>) -> Result<()> {
    if !(req.tolerance > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", req.tolerance)));
    }
    if !(req.t >= 0.0) || !req.t.is_finite() {
        return Err(Error::Domain(format!("t must be finite and non-negative, got {}", req.t)));
    }
    if !(req.partition.scale > 0.0) {
        return Err(Error::Domain("partition scale must be positive".into()));
    }
    if req.endpoint_exponent <= req.kernel.min_endpoint_exponent() {
        return Err(Error::Domain(format!(
            "endpoint exponent {} is not integrable against the {:?} kernel",
            req.endpoint_exponent, req.kernel
        )));
    }
    match req.partition.tail {
        Tail::Compact { end } if !(end > 0.0) => {
            Err(Error::Domain("compact support end must be positive".into()))
        }
        Tail::Exponential { scale } if !(scale > 0.0) => {
            Err(Error::Domain("exponential tail scale must be positive".into()))
        }
        Tail::Algebraic { exponent } if req.kernel == Kernel::None && exponent <= 1.0 => {
            Err(Error::Domain(format!(
                "algebraic tail exponent {exponent} is not integrable without an oscillating kernel"
            )))
        }
        _ => Ok(()),
    }
}

fn finish(partial: Partial, strategy: Strategy) -> QuadratureResult {
    INTEGRALS.fetch_add(1, Ordering::Relaxed);
    EVALUATIONS.fetch_add(partial.evals as u64, Ordering::Relaxed);
    QuadratureResult {
        value: partial.value,
        error_estimate: partial.error,
        evaluations: partial.evals,
        strategy,
    }
}

/// `int_0^inf f(w) k(w t) dw`.
pub fn integrate_weighted(req: &QuadratureRequest<'_>) -> Result<QuadratureResult> {
    validate(req)?;
    let t = req.t;
    match req.kernel {
        Kernel::Sine | Kernel::Versine if t == 0.0 => {
            return Ok(finish(Partial::default(), Strategy::Trivial));
        }
        Kernel::Cosine if t == 0.0 => {
            let moment = QuadratureRequest {
                kernel: Kernel::None,
                ..*req
            };
            return integrate_weighted(&moment);
        }
        _ => {}
    }

    let upper = req.partition.effective_upper(req.endpoint_exponent, req.tolerance);
    let oscillatory = req.kernel != Kernel::None
        && match upper {
            Some(b) => b * t / (2.0 * PI) >= OSCILLATION_THRESHOLD,
            None => true,
        };
    let mut budget = Budget {
        remaining: req.budget,
    };
    if !oscillatory {
        let partial = panels(req, upper, &mut budget)
            .map_err(|p| quadrature_error("panel quadrature exhausted its budget", &p))?;
        return Ok(finish(partial, Strategy::Panels));
    }
    OSCILLATORY.fetch_add(1, Ordering::Relaxed);
    let (partial, strategy) = match req.kernel {
        Kernel::Versine => versine_partition(req, upper, &mut budget)?,
        _ => zero_partition(req, upper, &mut budget)?,
    };
    Ok(finish(partial, strategy))
}

/// Plain semi-infinite integral `int_0^inf f(w) dw` with the origin treated by
/// tanh-sinh and the tail by Gauss-Kronrod or an inverted tanh-sinh rule.
pub fn integrate_moment(
    integrand: Integrand<'_>,
    partition: Partition,
    endpoint_exponent: f64,
    tolerance: f64,
) -> Result<QuadratureResult> {
    let req = QuadratureRequest::new(integrand, Kernel::None, 0.0, partition)
        .endpoint_exponent(endpoint_exponent)
        .tolerance(tolerance);
    integrate_weighted(&req)
}

/// Adaptive Gauss-Kronrod on a finite interval, for smooth integrands.
pub fn integrate_interval(f: Integrand<'_>, a: f64, b: f64, tolerance: f64) -> Result<QuadratureResult> {
    integrate_interval_floor(f, a, b, tolerance, 0.0)
}

/// As [`integrate_interval`], converging once the error is below `abs_floor`
/// even if the relative target is not met (integrals that cancel to near zero).
pub fn integrate_interval_floor(
    f: Integrand<'_>,
    a: f64,
    b: f64,
    tolerance: f64,
    abs_floor: f64,
) -> Result<QuadratureResult> {
    if !(b >= a) {
        return Err(Error::Domain(format!("interval [{a}, {b}] is empty or reversed")));
    }
    if a == b {
        return Ok(finish(Partial::default(), Strategy::Panels));
    }
    let mut budget = Budget {
        remaining: DEFAULT_BUDGET,
    };
    let p = adaptive_gk(f, a, b, tolerance, abs_floor, &mut budget)
        .map_err(|p| quadrature_error("interval quadrature exhausted its budget", &p))?;
    Ok(finish(p, Strategy::Panels))
}

/// Tanh-sinh on a finite interval; suitable when either end is singular.
pub fn integrate_interval_singular(
    f: Integrand<'_>,
    a: f64,
    b: f64,
    tolerance: f64,
) -> Result<QuadratureResult> {
    if !(b > a) {
        return Err(Error::Domain(format!("interval [{a}, {b}] is empty or reversed")));
    }
    let mut budget = Budget {
        remaining: DEFAULT_BUDGET,
    };
    let p = tanh_sinh(f, a, b, tolerance, 0.0, &mut budget)
        .map_err(|p| quadrature_error("tanh-sinh did not converge", &p))?;
    Ok(finish(p, Strategy::Panels))
}

/// Independent moment strategy: substitute `w = s exp(u)` and apply the
/// trapezoid rule on the real line, halving the step until two successive
/// estimates agree. Only non-compact tails are supported.
pub fn integrate_moment_exp_substitution(
    integrand: Integrand<'_>,
    partition: Partition,
    tolerance: f64,
) -> Result<QuadratureResult> {
    if matches!(partition.tail, Tail::Compact { .. }) {
        return Err(Error::Unsupported(
            "exp-substitution strategy needs an unbounded support".into(),
        ));
    }
    let s = partition.scale;
    let g = |u: f64| {
        let w = s * u.exp();
        if w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        finite_or_zero(integrand(w) * w)
    };
    let mut evals = 0usize;
    // extend the range until terms are negligible relative to the running sum
    let sweep = |h: f64, offset: f64, evals: &mut usize| -> (f64, f64) {
        let mut sum = 0.0;
        let mut abs = 0.0;
        for dir in [1.0, -1.0] {
            let mut k = if dir > 0.0 || offset > 0.0 { 0.0 } else { 1.0 };
            let mut small_run = 0;
            loop {
                let u = dir * (k * h) + offset * dir;
                let v = g(u);
                *evals += 1;
                sum += v;
                abs += v.abs();
                if v.abs() <= 1e-18 * abs.max(f64::MIN_POSITIVE) {
                    small_run += 1;
                } else {
                    small_run = 0;
                }
                if small_run > 8 || k * h > 800.0 {
                    break;
                }
                k += 1.0;
            }
        }
        (sum, abs)
    };
    let mut h = 0.5;
    let (mut sum, mut abs) = sweep(h, 0.0, &mut evals);
    let mut estimate = h * sum;
    for _ in 0..10 {
        // the midpoints of the current grid
        let (mid, mid_abs) = sweep(h, 0.5 * h, &mut evals);
        sum += mid;
        abs += mid_abs;
        h *= 0.5;
        let next = h * sum;
        let delta = (next - estimate).abs();
        estimate = next;
        let floor = 20.0 * f64::EPSILON * h * abs;
        if delta <= tolerance * estimate.abs() || delta <= floor {
            return Ok(finish(
                Partial {
                    value: estimate,
                    error: delta.max(floor),
                    magnitude: h * abs,
                    evals,
                },
                Strategy::ExpSubstitution,
            ));
        }
    }
    Err(quadrature_error(
        "exp-substitution trapezoid did not converge",
        &Partial {
            value: estimate,
            error: f64::INFINITY,
            magnitude: h * abs,
            evals,
        },
    ))
}

fn panels(
    req: &QuadratureRequest<'_>,
    upper: Option<f64>,
    budget: &mut Budget,
) -> std::result::Result<Partial, Partial> {
    let t = req.t;
    let kernel = req.kernel;
    let f = req.integrand;
    let g = |w: f64| f(w) * kernel.eval(w * t);
    let rel = req.tolerance * 0.1;
    let split = match upper {
        Some(b) => req.partition.scale.min(b),
        None => req.partition.scale,
    };
    let head = tanh_sinh(&g, 0.0, split, rel, 0.0, budget)?;
    let tail = match upper {
        Some(b) if b > split => {
            let floor = (f64::EPSILON * head.magnitude).max(rel * head.value.abs());
            adaptive_gk(&g, split, b, rel, floor, budget).map_err(|p| head.add(p))?
        }
        Some(_) => Partial::default(),
        None => {
            let floor = (f64::EPSILON * head.magnitude).max(rel * head.value.abs());
            inverted_tail(&g, split, rel, floor, budget).map_err(|p| head.add(p))?
        }
    };
    Ok(head.add(tail))
}

/// Iterated averaging of the last `order + 1` partial sums.
fn averaged(sums: &[f64], order: usize) -> f64 {
    let n = sums.len();
    let mut row: Vec<f64> = sums[n - order - 1..].to_vec();
    for _ in 0..order {
        for i in 0..row.len() - 1 {
            row[i] = 0.5 * (row[i] + row[i + 1]);
        }
        row.pop();
    }
    row[0]
}

/// Zero-partition summation of `int_start^inf f(w) k(w t) dw` with panel
/// boundaries at the kernel zeros. `head` is the already integrated part
/// below `start`.
fn partition_sum(
    f: &dyn Fn(f64) -> f64,
    kernel: Kernel,
    t: f64,
    zero: &dyn Fn(usize) -> f64,
    first_index: usize,
    head: Partial,
    upper: Option<f64>,
    accelerate: bool,
    tolerance: f64,
    budget: &mut Budget,
) -> Result<(Partial, Strategy)> {
    let g = |w: f64| f(w) * kernel.eval(w * t);
    let rel = tolerance * 0.01;
    let mut sums = vec![head.value];
    let mut panel_error = head.error;
    let mut magnitude = head.magnitude;
    let mut evals = head.evals;
    let mut max_abs_sum = head.value.abs();
    let mut previous: Option<f64> = None;
    let mut settled = 0;
    let mut k = first_index;
    loop {
        let lo = zero(k);
        let mut hi = zero(k + 1);
        let mut last = false;
        if let Some(b) = upper {
            if hi >= b {
                hi = b;
                last = true;
            }
        }
        let floor = f64::EPSILON * 1e-2 * max_abs_sum.max(f64::MIN_POSITIVE);
        let panel = adaptive_gk(&g, lo, hi, rel, floor, budget).map_err(|p| {
            quadrature_error(
                "zero-partition panel exhausted the budget",
                &Partial {
                    value: sums.last().copied().unwrap_or(0.0) + p.value,
                    error: panel_error + p.error,
                    magnitude,
                    evals: evals + p.evals,
                },
            )
        })?;
        evals += panel.evals;
        panel_error += panel.error;
        magnitude += panel.magnitude;
        let s = sums.last().copied().unwrap_or(0.0) + panel.value;
        max_abs_sum = max_abs_sum.max(s.abs());
        sums.push(s);
        let rounding = 8.0 * f64::EPSILON * max_abs_sum * (sums.len() as f64).sqrt();
        if last {
            let error = panel_error + rounding;
            return Ok((
                Partial {
                    value: s,
                    error,
                    magnitude,
                    evals,
                },
                Strategy::ZeroPartitionDirect,
            ));
        }
        if accelerate && sums.len() > 2 * AVERAGING_ORDER + 2 {
            let accel = averaged(&sums, AVERAGING_ORDER);
            let lower = averaged(&sums, AVERAGING_ORDER - 1);
            let order_gap = (accel - lower).abs();
            let target = (tolerance * accel.abs()).max(rounding);
            if let Some(prev) = previous {
                let step = (accel - prev).abs();
                if step <= target && order_gap <= target.max(step) * 1e3 {
                    settled += 1;
                } else {
                    settled = 0;
                }
                if settled >= 3 {
                    return Ok((
                        Partial {
                            value: accel,
                            error: step + panel_error + rounding,
                            magnitude,
                            evals,
                        },
                        Strategy::ZeroPartitionAccelerated,
                    ));
                }
            }
            previous = Some(accel);
        }
        k += 1;
    }
}

fn zero_partition(
    req: &QuadratureRequest<'_>,
    upper: Option<f64>,
    budget: &mut Budget,
) -> Result<(Partial, Strategy)> {
    let t = req.t;
    let f = req.integrand;
    let kernel = req.kernel;
    let g = |w: f64| f(w) * kernel.eval(w * t);
    let offset = match kernel {
        Kernel::Cosine => 0.5,
        _ => 0.0,
    };
    let zero = move |k: usize| (k as f64 + offset) * PI / t;
    // first panel reaches to the first kernel zero past the origin
    let mut first_end = zero(1);
    if let Some(b) = upper {
        first_end = first_end.min(b);
    }
    let head = tanh_sinh(&g, 0.0, first_end, req.tolerance * 0.01, 0.0, budget)
        .map_err(|p| quadrature_error("origin panel did not converge", &p))?;
    if upper.is_some_and(|b| first_end >= b) {
        return Ok((head, Strategy::ZeroPartitionDirect));
    }
    let accelerate = !matches!(req.partition.tail, Tail::Compact { .. });
    partition_sum(f, kernel, t, &zero, 1, head, upper, accelerate, req.tolerance, budget)
}

/// `int f(w) (1 - cos w t) dw` split as an origin panel with the full
/// versine kernel plus `int_z^inf f - int_z^inf f cos(w t)`.
fn versine_partition(
    req: &QuadratureRequest<'_>,
    upper: Option<f64>,
    budget: &mut Budget,
) -> Result<(Partial, Strategy)> {
    let t = req.t;
    let f = req.integrand;
    let g = |w: f64| f(w) * Kernel::Versine.eval(w * t);
    let z0 = 0.5 * PI / t;
    let head = tanh_sinh(&g, 0.0, z0, req.tolerance * 0.01, 0.0, budget)
        .map_err(|p| quadrature_error("origin panel did not converge", &p))?;
    let floor = f64::EPSILON * head.magnitude;
    let plain = match upper {
        Some(b) => adaptive_gk(f, z0, b, req.tolerance * 0.01, floor, budget),
        None => inverted_tail(f, z0, req.tolerance * 0.01, floor, budget),
    }
    .map_err(|p| quadrature_error("versine moment part did not converge", &p))?;
    let zero = move |k: usize| (k as f64 + 0.5) * PI / t;
    let (osc, strategy) = partition_sum(
        f,
        Kernel::Cosine,
        t,
        &zero,
        0,
        Partial::default(),
        upper,
        !matches!(req.partition.tail, Tail::Compact { .. }),
        req.tolerance,
        budget,
    )?;
    let combined = Partial {
        value: head.value + plain.value - osc.value,
        error: head.error + plain.error + osc.error,
        magnitude: head.magnitude + plain.magnitude + osc.magnitude,
        evals: head.evals + plain.evals + osc.evals,
    };
    Ok((combined, strategy))
}
