//! Information backflow: intervals of negative dephasing rate, the measure
//! `N = int_{gamma<0} |gamma| e^{-Xi} dt`, the long-time flow direction and
//! its correspondence with the energy regime.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{self, in_backflow_band, odd_natural, select_indices, EnergyRegime};
use crate::dynamics::{log_space, DephasingState};
use crate::energy::QubitPreparation;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectral::SpectralModel;
use crate::special::{factorial, gamma};

/// Initial scan resolution.
pub const SCAN_POINTS: usize = 1000;
/// Root tolerance in units of `1/omega_s`.
pub const ROOT_TOLERANCE: f64 = 1e-8;
/// Negative runs whose rate never exceeds this (in `omega_s`) in magnitude are tangential.
pub const TANGENTIAL_THRESHOLD: f64 = 1e-12;
/// Default scan horizon in units of `1/omega_s`.
pub const DEFAULT_T_MAX: f64 = 1e3;
/// Relative size of the neglected tail above which `N` is reported as a lower bound.
pub const TAIL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NegativeRateInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub min_rate: f64,
    /// The rate is still negative at `t_max`; `t_end` is the scan horizon, not a root.
    pub open_end: bool,
}

fn bisect(state: &DephasingState<'_>, mut neg: f64, mut pos: f64, tol: f64) -> Result<f64> {
    while (neg - pos).abs() > tol {
        let mid = 0.5 * (neg + pos);
        if state.gamma(mid)? < 0.0 {
            neg = mid;
        } else {
            pos = mid;
        }
    }
    Ok(0.5 * (neg + pos))
}

/// Scan `(0, t_max]` for sign changes of the rate on a log grid, refine near
/// shallow local minima, and bisect every crossing.
pub fn find_negative_intervals(state: &DephasingState<'_>, t_max: f64) -> Result<Vec<NegativeRateInterval>> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Domain(format!("t_max must be positive, got {t_max}")));
    }
    let ws = state.model.scale_freq;
    let mut times = log_space(t_max * 1e-6, t_max, SCAN_POINTS);
    let mut rates: Vec<f64> = times.par_iter().map(|&t| state.gamma(t)).collect::<Result<_>>()?;

    // a short negative dip can hide between two positive grid points
    let mut extra = Vec::new();
    for i in 1..times.len() - 1 {
        let (a, b, c) = (rates[i - 1], rates[i], rates[i + 1]);
        if b > 0.0 && b < a && b < c && b < 0.1 * a.min(c) {
            let (lo, hi) = (times[i - 1], times[i + 1]);
            extra.extend((1..16).map(|k| lo + (hi - lo) * k as f64 / 16.0));
        }
    }
    if !extra.is_empty() {
        let extra_rates: Vec<f64> = extra.par_iter().map(|&t| state.gamma(t)).collect::<Result<_>>()?;
        let mut merged: Vec<(f64, f64)> = times.into_iter().zip(rates).chain(extra.into_iter().zip(extra_rates)).collect();
        merged.sort_by(|x, y| x.0.total_cmp(&y.0));
        merged.dedup_by(|x, y| x.0 == y.0);
        (times, rates) = merged.into_iter().unzip();
    }

    let tol = ROOT_TOLERANCE / ws;
    let mut out = Vec::new();
    let mut i = 0;
    while i < times.len() {
        if rates[i] >= 0.0 {
            i += 1;
            continue;
        }
        let first = i;
        while i < times.len() && rates[i] < 0.0 {
            i += 1;
        }
        let last = i - 1;
        let min_rate = rates[first..=last].iter().copied().fold(f64::INFINITY, f64::min);
        if min_rate.abs() < TANGENTIAL_THRESHOLD * ws {
            continue;
        }
        let t_start = if first == 0 { 0.0 } else { bisect(state, times[first], times[first - 1], tol)? };
        let (t_end, open_end) = if last + 1 == times.len() {
            (t_max, true)
        } else {
            (bisect(state, times[last], times[last + 1], tol)?, false)
        };
        out.push(NegativeRateInterval {
            t_start,
            t_end,
            min_rate,
            open_end,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure {
    pub value: f64,
    /// One entry per interval, in order.
    pub contributions: Vec<f64>,
    /// Estimate of `int_{t_max}^inf |gamma| e^{-Xi}` when the last interval is open.
    pub tail_estimate: f64,
    pub lower_bound: bool,
}

fn interval_contribution(state: &DephasingState<'_>, iv: &NegativeRateInterval) -> Result<f64> {
    let f = |t: f64| match (state.gamma(t), state.xi(t)) {
        (Ok(g), Ok(x)) => g.abs() * (-x).exp(),
        _ => f64::NAN,
    };
    let r = quadrature::integrate_interval(&f, iv.t_start, iv.t_end, state.tolerance.max(1e-12))?;
    if !r.value.is_finite() {
        return Err(Error::Quadrature {
            message: "rate or decoherence factor failed inside a negative interval".into(),
            partial: r.value,
            error_estimate: r.error_estimate,
        });
    }
    Ok(r.value)
}

/// `N` over the negative intervals in `(0, t_max]`; the tail beyond `t_max`
/// is estimated from the local power-law decay of the rate.
pub fn non_markovianity(state: &DephasingState<'_>, t_max: f64) -> Result<Measure> {
    let intervals = find_negative_intervals(state, t_max)?;
    measure_over(state, &intervals, t_max)
}

pub fn measure_over(state: &DephasingState<'_>, intervals: &[NegativeRateInterval], t_max: f64) -> Result<Measure> {
    let contributions: Vec<f64> = intervals
        .par_iter()
        .map(|iv| interval_contribution(state, iv))
        .collect::<Result<_>>()?;
    let value = contributions.iter().fold(0.0, |acc, c| acc + c);
    let mut tail_estimate = 0.0;
    if intervals.last().is_some_and(|iv| iv.open_end) {
        let g1 = state.gamma(0.5 * t_max)?.abs();
        let g2 = state.gamma(t_max)?.abs();
        let p = (g1 / g2).ln() / 2f64.ln();
        let w = (-state.xi(t_max)?).exp();
        tail_estimate = if p > 1.0 { g2 * w * t_max / (p - 1.0) } else { f64::INFINITY };
    }
    Ok(Measure {
        value,
        contributions,
        tail_estimate,
        lower_bound: tail_estimate > TAIL_TOLERANCE * value.max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowDirection {
    Backflow,
    Loss,
}

impl FlowDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowDirection::Backflow => "backflow",
            FlowDirection::Loss => "loss",
        }
    }
}

impl std::fmt::Display for FlowDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Leading long-time coefficient of `gamma_T` in
/// `gamma_T ~ g tau^(1-a) ln^k tau`, together with `(a, k)`.
/// Negative `g` means information flows back at long times.
pub fn thermal_leading_term(model: &SpectralModel, temperature: f64) -> Result<(f64, f64, f64)> {
    let lead = model.terms[0];
    let term = if odd_natural(lead.alpha) == Some(0) {
        lead
    } else {
        model.terms[select_indices(model)?.k1]
    };
    let (a, q, c) = (term.alpha, term.log_power, term.coeff);
    let two_t = 2.0 * temperature;
    Ok(match odd_natural(a) {
        Some(0) => (two_t * c * PI / 2.0, a, q),
        Some(m) => {
            // G(a) = Gamma(a-1) sin(pi (a-1)/2) vanishes; its derivative leads
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let g_prime = 0.5 * PI * factorial(2 * m - 1) * sign;
            (-two_t * c * q * g_prime, a, q - 1.0)
        }
        None => (-two_t * c * gamma(a - 1.0) * (0.5 * PI * a).cos(), a, q),
    })
}

/// Flow direction according to the prose table, under both readings of its
/// "if n0 does not vanish" clause (compare [`asymptotics::LiteralReadings`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowReadings {
    pub unconditional: FlowDirection,
    pub conditional: FlowDirection,
}

pub fn literal_flow_direction(model: &SpectralModel) -> Result<FlowReadings> {
    let lead = model.terms[0];
    let (a0, n0) = (lead.alpha, lead.log_power);
    let pick = |b: bool| if b { FlowDirection::Backflow } else { FlowDirection::Loss };
    let both = |d| FlowReadings {
        unconditional: d,
        conditional: d,
    };
    Ok(match odd_natural(a0) {
        Some(0) => both(FlowDirection::Loss),
        Some(m) if n0 != 0.0 => both(pick(m % 2 == 0)),
        Some(_) => {
            let k0 = select_indices(model)?.k0.expect("refused without k0");
            let ak = model.terms[k0].alpha;
            let r = (ak - 3.0).rem_euclid(4.0);
            both(pick(ak > 3.0 && r > 0.0 && r <= 2.0))
        }
        None => {
            let band = in_backflow_band(a0);
            FlowReadings {
                unconditional: pick(band),
                conditional: pick(band && n0 != 0.0),
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowBasis {
    /// Sign of the leading thermal coefficient (`T > 0`).
    ThermalCoefficient,
    /// Sign of the rate at the end of the scan (`T = 0`, no table claim).
    Numerics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowClassification {
    pub direction: FlowDirection,
    pub basis: FlowBasis,
    pub leading_coeff: Option<f64>,
    pub literal: Option<FlowReadings>,
    pub flags: Vec<String>,
}

pub fn classify_flow_direction(state: &DephasingState<'_>, t_max: f64) -> Result<FlowClassification> {
    let model = state.model;
    if state.temperature == 0.0 {
        let rate = state.gamma(t_max)?;
        let direction = if rate < -TANGENTIAL_THRESHOLD * model.scale_freq {
            FlowDirection::Backflow
        } else {
            FlowDirection::Loss
        };
        return Ok(FlowClassification {
            direction,
            basis: FlowBasis::Numerics,
            leading_coeff: None,
            literal: None,
            flags: vec!["zero temperature: numerics only, no table claim".into()],
        });
    }
    let (g, _, _) = thermal_leading_term(model, state.temperature)?;
    let direction = if g < 0.0 { FlowDirection::Backflow } else { FlowDirection::Loss };
    let literal = literal_flow_direction(model)?;
    let mut flags = Vec::new();
    if literal.unconditional != literal.conditional {
        flags.push(format!(
            "table readings differ: unconditional {} vs conditional {}",
            literal.unconditional, literal.conditional
        ));
    }
    if literal.unconditional != direction {
        flags.push(format!(
            "thermal coefficient gives {direction}, interval table gives {}",
            literal.unconditional
        ));
    }
    Ok(FlowClassification {
        direction,
        basis: FlowBasis::ThermalCoefficient,
        leading_coeff: Some(g),
        literal: Some(literal),
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    Mismatch,
    /// `alpha0 <= 1` with the pairing loss + increase stated for that range.
    SubOhmic,
    Refused,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Match => "match",
            Verdict::Mismatch => "mismatch",
            Verdict::SubOhmic => "sub_ohmic",
            Verdict::Refused => "refused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub alpha0: f64,
    pub n0: f64,
    pub t_factorized: f64,
    pub t_prep: f64,
    pub measure: Measure,
    pub intervals: Vec<NegativeRateInterval>,
    pub flow: FlowClassification,
    pub energy_regime: EnergyRegime,
    pub verdict: Verdict,
    pub narrative: String,
}

impl FlowReport {
    pub const CSV_HEADER: &'static str = "alpha0,n0,T_fact,T_prep,N,n_intervals,flow_dir,energy_regime,verdict";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{},{},{},{}",
            self.alpha0,
            self.n0,
            self.t_factorized,
            self.t_prep,
            self.measure.value,
            self.intervals.len(),
            self.flow.direction,
            self.energy_regime,
            self.verdict.as_str()
        )
    }
}

/// Joins the flow direction under a factorized initial state at
/// `t_factorized` with the energy regime of the correlated preparation.
pub fn correspondence_report(
    prep: &QubitPreparation,
    model: &SpectralModel,
    t_factorized: f64,
    t_max: f64,
) -> Result<FlowReport> {
    let state = DephasingState::new(model, t_factorized)?;
    let intervals = find_negative_intervals(&state, t_max)?;
    let measure = measure_over(&state, &intervals, t_max)?;
    let flow = classify_flow_direction(&state, t_max)?;
    let energy_regime = asymptotics::classify_energy_regime(prep, model);
    let alpha0 = model.alpha0();
    let expected = match flow.direction {
        FlowDirection::Backflow => EnergyRegime::LongTimeIncrease,
        FlowDirection::Loss => EnergyRegime::LongTimeDecrease,
    };
    let (verdict, narrative) = if energy_regime == EnergyRegime::Refused {
        (Verdict::Refused, "energy regime refused: no admissible term for the odd exponent".to_string())
    } else if alpha0 <= 1.0 {
        let paired = flow.direction == FlowDirection::Loss && energy_regime == EnergyRegime::LongTimeIncrease;
        if paired {
            (
                Verdict::SubOhmic,
                format!("alpha0 = {alpha0}: information is lost while the bath energy increases"),
            )
        } else {
            (
                Verdict::Mismatch,
                format!("alpha0 = {alpha0}: {} with energy {energy_regime}", flow.direction),
            )
        }
    } else if energy_regime == EnergyRegime::Constant {
        (Verdict::Mismatch, "d0 = 0: the bath energy does not move".to_string())
    } else if energy_regime == expected {
        (
            Verdict::Match,
            format!("{} accompanies a long-time energy {energy_regime}", flow.direction),
        )
    } else {
        (
            Verdict::Mismatch,
            format!("{} but long-time energy {energy_regime}", flow.direction),
        )
    };
    Ok(FlowReport {
        alpha0,
        n0: model.log_power0(),
        t_factorized,
        t_prep: prep.t_prep,
        measure,
        intervals,
        flow,
        energy_regime,
        verdict,
        narrative,
    })
}
