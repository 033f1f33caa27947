//! Short- and long-time expansions of the bath energy, index selection for
//! odd ohmicity parameters, the energy-regime classifier, and the Mellin
//! transform `K^(s) = cos(pi s / 2) Gamma(s) Omega^(-s)` of
//! `K(tau) = Lambda(tau / omega_s) / omega_s`.
//!
//! Long-time terms are written in `tau = omega_s t` as
//! `coeff * tau^(-power) * ln(tau)^log_power` and describe
//! `eps_E(t) - eps_E(inf) = -d0 Lambda(t)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::{self, QubitPreparation};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectral::{LowFreqTerm, SpectralModel};
use crate::special::{digamma, factorial, gamma, gamma_complex};

/// Tolerance for treating an exponent as an odd natural number.
pub const ODD_TOLERANCE: f64 = 1e-9;

/// `Some(m)` when `alpha = 1 + 2m` within [`ODD_TOLERANCE`].
pub fn odd_natural(alpha: f64) -> Option<u32> {
    let m = ((alpha - 1.0) / 2.0).round();
    if m >= 0.0 && (alpha - (1.0 + 2.0 * m)).abs() <= ODD_TOLERANCE {
        Some(m as u32)
    } else {
        None
    }
}

/// A term may carry the leading behaviour unless its exponent is odd and it has no log factor.
fn admissible(term: &LowFreqTerm) -> bool {
    odd_natural(term.alpha).is_none() || term.log_power != 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Indices {
    pub k0: Option<usize>,
    pub k1: usize,
    pub k2: Option<usize>,
}

/// `k0`: least `j >= 1` whose term is admissible; `k1 = 0` unless `alpha0` is
/// odd with vanishing log power, then `k1 = k0`; `k2`: least admissible index
/// above `k1`. Refuses when `k1` needs a `k0` that does not exist.
pub fn select_indices(model: &SpectralModel) -> Result<Indices> {
    let terms = &model.terms;
    let k0 = (1..terms.len()).find(|&j| admissible(&terms[j]));
    let k1 = if admissible(&terms[0]) {
        0
    } else {
        k0.ok_or_else(|| {
            Error::Refused(format!(
                "alpha0 = {} is odd with no logarithmic factor and no later admissible term exists",
                terms[0].alpha
            ))
        })?
    };
    let k2 = (k1 + 1..terms.len()).find(|&j| admissible(&terms[j]));
    Ok(Indices { k0, k1, k2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticTerm {
    pub coeff: f64,
    /// Decay exponent `p` of `tau^(-p)`; negative for growth (short times).
    pub power: f64,
    pub log_power: f64,
}

impl AsymptoticTerm {
    pub fn eval(&self, tau: f64) -> f64 {
        let log = if self.log_power == 0.0 { 1.0 } else { tau.ln().powf(self.log_power) };
        self.coeff * tau.powf(-self.power) * log
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ShortTime,
    LongTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionCase {
    ShortTimeQuadratic,
    /// `u0 tau^-a ln^n tau`
    LogRelaxation,
    /// `u0' tau^-a`
    PowerLaw,
    /// `u1 tau^-(1+2m) ln^(n-1) tau`
    OddLogRelaxation,
    /// `u1' tau^-(1+2m)`
    OddPowerLaw,
    /// `tau^-a (u2 ln^b tau + u2' ln^(b-1) tau)`
    Class2LogRelaxation,
    /// `u2 tau^-a`
    Class2PowerLaw,
    /// `u2' tau^-a ln^(b-1) tau`, odd `a`
    Class2OddLogRelaxation,
    /// `u2' tau^-a`, odd `a`, `b = 1`
    Class2OddPowerLaw,
    /// `d0 = 0`: the energy does not move.
    Constant,
}

impl ExpansionCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExpansionCase::ShortTimeQuadratic => "short_time_quadratic",
            ExpansionCase::LogRelaxation => "log_relaxation",
            ExpansionCase::PowerLaw => "power_law",
            ExpansionCase::OddLogRelaxation => "odd_log_relaxation",
            ExpansionCase::OddPowerLaw => "odd_power_law",
            ExpansionCase::Class2LogRelaxation => "class2_log_relaxation",
            ExpansionCase::Class2PowerLaw => "class2_power_law",
            ExpansionCase::Class2OddLogRelaxation => "class2_odd_log_relaxation",
            ExpansionCase::Class2OddPowerLaw => "class2_odd_power_law",
            ExpansionCase::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionSpec {
    pub regime: Regime,
    /// Leading term first, then at most one subleading term.
    pub terms: Vec<AsymptoticTerm>,
    pub case: ExpansionCase,
    pub indices: Option<Indices>,
    /// The leading exponent was taken from `k0` instead of `alpha0`.
    pub substituted: bool,
    pub warnings: Vec<String>,
}

impl ExpansionSpec {
    pub fn leading(&self) -> &AsymptoticTerm {
        &self.terms[0]
    }

    /// Sum of the retained terms at `tau = omega_s t`.
    pub fn eval(&self, tau: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(tau)).sum()
    }
}

/// `F(a) = Gamma(a) cos(pi a / 2)`
fn f_cos(a: f64) -> f64 {
    gamma(a) * (0.5 * PI * a).cos()
}

/// `F'(a) = cos(pi a/2) Gamma'(a) - (pi/2) sin(pi a/2) Gamma(a)`
fn f_cos_derivative(a: f64) -> f64 {
    let g = gamma(a);
    (0.5 * PI * a).cos() * g * digamma(a) - 0.5 * PI * (0.5 * PI * a).sin() * g
}

/// Long-time expansion of `eps_E(t) - eps_E(inf)`.
pub fn long_time_expansion(prep: &QubitPreparation, model: &SpectralModel) -> Result<ExpansionSpec> {
    let d0 = energy::d0(prep)?;
    let indices = select_indices(model)?;
    let mut warnings = Vec::new();
    if model.has_discontinuity() {
        warnings.push(
            "the density jumps at the cutoff; Lambda(t) ~ sin(w_c t)/t oscillations dominate \
             the low-frequency power law for alpha0 > 1"
                .to_string(),
        );
    }
    if model.conditions_assumed {
        warnings.push("admissibility of the tabulated density is assumed, not verified".to_string());
    }
    let term = model.terms[indices.k1];
    let substituted = indices.k1 != 0;
    let ws = model.scale_freq;
    let (a, q, c) = (term.alpha, term.log_power, term.coeff);
    let class1 = model.natural_logs;

    if d0 == 0.0 {
        return Ok(ExpansionSpec {
            regime: Regime::LongTime,
            terms: vec![AsymptoticTerm {
                coeff: 0.0,
                power: a,
                log_power: q,
            }],
            case: ExpansionCase::Constant,
            indices: Some(indices),
            substituted,
            warnings,
        });
    }

    let mut terms = Vec::new();
    let case = match odd_natural(a) {
        Some(m) => {
            // the cos(pi a/2) Gamma(a) factor vanishes; the log derivative leads
            let coeff = if class1 {
                let sign = if (1 + m) % 2 == 0 { 1.0 } else { -1.0 };
                sign * PI * q * factorial(2 * m) * ws * d0 * c / 2.0
            } else {
                c * d0 * ws * q * f_cos_derivative(a)
            };
            terms.push(AsymptoticTerm {
                coeff,
                power: a,
                log_power: q - 1.0,
            });
            match (class1, q == 1.0) {
                (true, true) => ExpansionCase::OddPowerLaw,
                (true, false) => ExpansionCase::OddLogRelaxation,
                (false, true) => ExpansionCase::Class2OddPowerLaw,
                (false, false) => ExpansionCase::Class2OddLogRelaxation,
            }
        }
        None => {
            let u0 = -ws * d0 * c * f_cos(a);
            terms.push(AsymptoticTerm {
                coeff: u0,
                power: a,
                log_power: q,
            });
            if q != 0.0 {
                terms.push(AsymptoticTerm {
                    coeff: c * d0 * ws * q * f_cos_derivative(a),
                    power: a,
                    log_power: q - 1.0,
                });
            }
            match (class1, q == 0.0) {
                (true, true) => ExpansionCase::PowerLaw,
                (true, false) => ExpansionCase::LogRelaxation,
                (false, true) => ExpansionCase::Class2PowerLaw,
                (false, false) => ExpansionCase::Class2LogRelaxation,
            }
        }
    };
    Ok(ExpansionSpec {
        regime: Regime::LongTime,
        terms,
        case,
        indices: Some(indices),
        substituted,
        warnings,
    })
}

/// Short-time expansion `eps_E(t) - eps_E(0) ~ l_E t^2`, written as
/// `(l_E / omega_s^2) tau^2`.
pub fn short_time_expansion(prep: &QubitPreparation, model: &SpectralModel) -> Result<ExpansionSpec> {
    let st = energy::short_time_coefficient(prep, model)?;
    let mut warnings = Vec::new();
    if !st.law_applies {
        let needed = if model.natural_logs { 1 } else { 3 };
        warnings.push(format!(
            "chi0 = {} does not exceed {needed}; the quadratic short-time law is not guaranteed",
            model.high_freq_decay
        ));
    }
    let ws = model.scale_freq;
    Ok(ExpansionSpec {
        regime: Regime::ShortTime,
        terms: vec![AsymptoticTerm {
            coeff: st.l_e / (ws * ws),
            power: -2.0,
            log_power: 0.0,
        }],
        case: ExpansionCase::ShortTimeQuadratic,
        indices: None,
        substituted: false,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnergyRegime {
    LongTimeIncrease,
    LongTimeDecrease,
    Constant,
    Refused,
}

impl EnergyRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyRegime::LongTimeIncrease => "increase",
            EnergyRegime::LongTimeDecrease => "decrease",
            EnergyRegime::Constant => "constant",
            EnergyRegime::Refused => "refused",
        }
    }
}

impl std::fmt::Display for EnergyRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sign of the leading long-time coefficient: negative means the bath energy
/// approaches its asymptote from below.
pub fn classify_energy_regime(prep: &QubitPreparation, model: &SpectralModel) -> EnergyRegime {
    match long_time_expansion(prep, model) {
        Err(_) => EnergyRegime::Refused,
        Ok(exp) if exp.case == ExpansionCase::Constant => EnergyRegime::Constant,
        Ok(exp) => {
            if exp.leading().coeff < 0.0 {
                EnergyRegime::LongTimeIncrease
            } else {
                EnergyRegime::LongTimeDecrease
            }
        }
    }
}

/// `a` lies in `(3 + 4n, 5 + 4n)` for some natural `n` (open interval).
pub fn in_backflow_band(a: f64) -> bool {
    a > 3.0 && {
        let r = (a - 3.0).rem_euclid(4.0);
        r > 0.0 && r < 2.0
    }
}

/// `a` lies in `(3 + 4n, 5 + 4n]`.
fn in_backflow_band_closed(a: f64) -> bool {
    a > 3.0 && {
        let r = (a - 3.0).rem_euclid(4.0);
        r > 0.0 && r <= 2.0
    }
}

/// Regime predicted by the prose interval table for the correlated energy,
/// under the two readings of its "if n0 does not vanish" clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LiteralReadings {
    /// The clause does not restrict the intervals.
    pub unconditional: EnergyRegime,
    /// The clause applies to both `(0,1)` and `(3+4n, 5+4n)`.
    pub conditional: EnergyRegime,
}

impl LiteralReadings {
    pub fn differ(&self) -> bool {
        self.unconditional != self.conditional
    }
}

pub fn literal_energy_regime(prep: &QubitPreparation, model: &SpectralModel) -> Result<LiteralReadings> {
    if energy::d0(prep)? == 0.0 {
        let c = EnergyRegime::Constant;
        return Ok(LiteralReadings {
            unconditional: c,
            conditional: c,
        });
    }
    let lead = model.terms[0];
    let (a0, n0) = (lead.alpha, lead.log_power);
    let both = |r: EnergyRegime| LiteralReadings {
        unconditional: r,
        conditional: r,
    };
    let pick = |inc: bool| {
        if inc {
            EnergyRegime::LongTimeIncrease
        } else {
            EnergyRegime::LongTimeDecrease
        }
    };
    match odd_natural(a0) {
        Some(m) if n0 != 0.0 => Ok(both(pick(m % 2 == 0))),
        Some(_) => {
            let idx = select_indices(model)?;
            let k0 = idx.k0.expect("select_indices refuses without k0");
            Ok(both(pick(in_backflow_band_closed(model.terms[k0].alpha))))
        }
        None => {
            let band = a0 < 1.0 || in_backflow_band(a0);
            Ok(LiteralReadings {
                unconditional: pick(band),
                conditional: pick(band && n0 != 0.0),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: EnergyRegime,
    pub leading_coeff: Option<f64>,
    pub literal: Option<LiteralReadings>,
    /// Disagreements between the coefficient rule and the prose table, and
    /// between the two readings of the table.
    pub flags: Vec<String>,
}

pub fn energy_regime_report(prep: &QubitPreparation, model: &SpectralModel) -> RegimeReport {
    let regime = classify_energy_regime(prep, model);
    let leading_coeff = long_time_expansion(prep, model).ok().map(|e| e.leading().coeff);
    let literal = literal_energy_regime(prep, model).ok();
    let mut flags = Vec::new();
    if let Some(lit) = literal {
        if lit.differ() {
            flags.push(format!(
                "table readings differ: unconditional {} vs conditional {}",
                lit.unconditional, lit.conditional
            ));
        }
        if lit.unconditional != regime {
            flags.push(format!(
                "coefficient sign gives {regime}, interval table gives {}",
                lit.unconditional
            ));
        }
    }
    RegimeReport {
        regime,
        leading_coeff,
        literal,
        flags,
    }
}

// ---------------------------------------------------------------------------
// Mellin transform

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MellinData {
    pub strip_lower: f64,
    /// `min(1, alpha0)`
    pub strip_upper: f64,
    /// Decay of `Omega^(1 - s)` along vertical lines is established analytically
    /// (Stirling bound) rather than assumed.
    pub decay_verified: bool,
}

pub fn mellin_data(model: &SpectralModel) -> MellinData {
    MellinData {
        strip_lower: 0.0,
        strip_upper: model.alpha0().min(1.0),
        decay_verified: model.is_exp_cutoff().is_some(),
    }
}

fn gamma_pole_order(z: Complex64) -> u32 {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        1
    } else {
        0
    }
}

/// `K^(s)` for the exponential-cutoff family:
/// `cos(pi s/2) Gamma(s) lambda r^(s-1) Gamma(alpha - s)`, `r = omega_s / omega_c`.
/// Removable points (a Gamma pole cancelled by a cosine zero) return the limit.
pub fn mellin_k(model: &SpectralModel, s: Complex64) -> Result<Complex64> {
    let alpha = model.is_exp_cutoff().ok_or_else(|| {
        Error::Unsupported("closed-form Mellin transform exists only for the exponential cutoff".into())
    })?;
    let order_gamma = gamma_pole_order(s) + gamma_pole_order(Complex64::new(alpha, 0.0) - s);
    let cos_zero = s.im == 0.0 && odd_integer(s.re);
    let order = order_gamma as i32 - cos_zero as i32;
    if order > 0 {
        return Err(Error::Pole {
            at: format!("{s}"),
            order: order as u32,
        });
    }
    let eval = |s: Complex64| {
        let r = model.scale_freq / model.cutoff_freq;
        (0.5 * PI * s).cos()
            * gamma_complex(s)
            * model.amplitude
            * Complex64::new(r, 0.0).powc(s - 1.0)
            * gamma_complex(Complex64::new(alpha, 0.0) - s)
    };
    if order_gamma > 0 {
        // removable: average over a small circle
        let h = 1e-5;
        let dirs = [
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(0.0, h),
            Complex64::new(0.0, -h),
        ];
        return Ok(dirs.iter().map(|d| eval(s + d)).sum::<Complex64>() / 4.0);
    }
    Ok(eval(s))
}

fn odd_integer(x: f64) -> bool {
    x == x.round() && (x.round() as i64).rem_euclid(2) == 1
}

/// `binom(-alpha, k)`
fn binom_neg(alpha: f64, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (-alpha - i as f64) / (i as f64 + 1.0);
    }
    acc
}

/// Direct numerical Mellin integral `int_0^inf tau^(s-1) K(tau) dtau` for the
/// exponential-cutoff family, using the time-domain closed form of `K`.
/// `[0, r/2]` uses the convergent small-`tau` series, `[r/2, R]` adaptive
/// Gauss-Kronrod, and `[R, inf)` the convergent large-`tau` series.
pub fn mellin_numeric(model: &SpectralModel, s: Complex64) -> Result<Complex64> {
    let alpha = model.is_exp_cutoff().ok_or_else(|| {
        Error::Unsupported("numerical Mellin check needs the exponential cutoff".into())
    })?;
    let data = mellin_data(model);
    if !(s.re > data.strip_lower && s.re < data.strip_upper) {
        return Err(Error::Domain(format!(
            "s = {s} lies outside the fundamental strip (0, {})",
            data.strip_upper
        )));
    }
    let r = model.scale_freq / model.cutoff_freq;
    // K(tau) = A Re[(1 - i tau/r)^-alpha], A = lambda Gamma(alpha) / r
    let amp = model.amplitude * gamma(alpha) / r;
    let k_of = |tau: f64| {
        let u = tau / r;
        amp * (-0.5 * alpha * (u * u).ln_1p()).exp() * (alpha * u.atan()).cos()
    };

    let a = 0.5 * r;
    // head: sum_j binom(-alpha, 2j) (-1)^j (tau/r)^(2j), integrated against tau^(s-1)
    let mut head = Complex64::new(0.0, 0.0);
    for j in 0..60 {
        let coeff = binom_neg(alpha, 2 * j) * if j % 2 == 0 { 1.0 } else { -1.0 } / r.powi(2 * j as i32);
        let p = s + 2.0 * j as f64;
        let term = coeff * Complex64::new(a, 0.0).powc(p) / p;
        head += term;
        if term.norm() < 1e-18 * head.norm() {
            break;
        }
    }
    head *= amp;

    let big = 100.0 * r;
    let re = |tau: f64| k_of(tau) * (Complex64::new(tau, 0.0).powc(s - 1.0)).re;
    let im = |tau: f64| k_of(tau) * (Complex64::new(tau, 0.0).powc(s - 1.0)).im;
    // one of the parts can nearly cancel; its error is judged against the modulus
    let modulus = |tau: f64| k_of(tau).abs() * tau.powf(s.re - 1.0);
    let scale = quadrature::integrate_interval(&modulus, a, big, 1e-6)?.value;
    let mid_re = quadrature::integrate_interval_floor(&re, a, big, 1e-12, 1e-13 * scale)?.value;
    let mid_im = quadrature::integrate_interval_floor(&im, a, big, 1e-12, 1e-13 * scale)?.value;

    // tail: K(tau) = sum_k Re(A_k) tau^(-alpha-k),
    // A_k = amp e^(i pi alpha/2) r^alpha binom(-alpha,k) (i r)^k
    let mut tail = Complex64::new(0.0, 0.0);
    let phase = Complex64::from_polar(1.0, 0.5 * PI * alpha);
    let mut ir_k = Complex64::new(1.0, 0.0);
    for k in 0..80 {
        let ak = amp * phase * r.powf(alpha) * binom_neg(alpha, k) * ir_k;
        let e = Complex64::new(alpha + k as f64, 0.0) - s;
        let term = ak.re * Complex64::new(big, 0.0).powc(-e) / e;
        tail += term;
        if term.norm() < 1e-18 * tail.norm().max(1e-300) && k > 2 {
            break;
        }
        ir_k *= Complex64::new(0.0, r);
    }
    Ok(head + Complex64::new(mid_re, mid_im) + tail)
}

/// Reconstruct `K(tau)` from `K^(s)` on the vertical line `Re s = strip midpoint`,
/// `|Im s| <= half_width`, with `points` trapezoid nodes.
pub fn inverse_mellin(model: &SpectralModel, tau: f64, half_width: f64, points: usize) -> Result<f64> {
    let data = mellin_data(model);
    let c = 0.5 * (data.strip_lower + data.strip_upper);
    let n = points.max(2);
    let h = 2.0 * half_width / (n - 1) as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let y = -half_width + i as f64 * h;
        let s = Complex64::new(c, y);
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * mellin_k(model, s)? * Complex64::new(tau, 0.0).powc(-s);
    }
    // (1 / 2 pi i) int K^(s) tau^-s ds with ds = i dy
    Ok((acc * h / (2.0 * PI)).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MellinSample {
    pub s_re: f64,
    pub s_im: f64,
    pub closed: Complex64,
    pub numeric: Complex64,
    pub relative_error: f64,
}

/// Compare [`mellin_k`] with [`mellin_numeric`] at `count` seeded random
/// points with `Re s` in `(0.05, 0.95) * strip_upper` and `|Im s| <= 4`.
pub fn mellin_cross_check(model: &SpectralModel, count: usize, seed: u64) -> Result<Vec<MellinSample>> {
    let data = mellin_data(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Complex64> = (0..count)
        .map(|_| {
            let re = data.strip_upper * rng.gen_range(0.05..0.95);
            let im = rng.gen_range(-4.0..4.0);
            Complex64::new(re, im)
        })
        .collect();
    points
        .into_iter()
        .map(|s| {
            let closed = mellin_k(model, s)?;
            let numeric = mellin_numeric(model, s)?;
            Ok(MellinSample {
                s_re: s.re,
                s_im: s.im,
                closed,
                numeric,
                relative_error: (closed - numeric).norm() / closed.norm(),
            })
        })
        .collect()
}
