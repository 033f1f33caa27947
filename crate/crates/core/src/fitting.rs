//! Least-squares fits used to compare numerical trajectories with the
//! asymptotic expansions.

use serde::Serialize;

use crate::error::{Error, Result};

/// `y ~ coeff * t^exponent`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub coeff: f64,
    /// RMS of the log residuals.
    pub residual: f64,
}

fn check_samples(t: &[f64], y: &[f64], min: usize) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::Domain("times and values differ in length".into()));
    }
    if t.len() < min {
        return Err(Error::Domain(format!("need at least {min} samples, got {}", t.len())));
    }
    if t.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain("fit times must be positive and finite".into()));
    }
    Ok(())
}

/// Straight line through `(ln t, ln |y|)`. All values must share one sign.
pub fn fit_power_law(t: &[f64], y: &[f64]) -> Result<PowerFit> {
    check_samples(t, y, 2)?;
    let sign = y[0].signum();
    if y.iter().any(|&v| v == 0.0 || v.signum() != sign || !v.is_finite()) {
        return Err(Error::Domain("power-law fit needs finite values of one sign".into()));
    }
    let xs: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("fit times must not all coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PowerFit {
        exponent: slope,
        coeff: sign * intercept.exp(),
        residual,
    })
}

/// `y ~ t^exponent (coeff ln^q t + sub_coeff ln^(q-1) t)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogFit {
    pub exponent: f64,
    pub log_power: f64,
    pub coeff: f64,
    pub sub_coeff: f64,
    /// RMS relative residual.
    pub residual: f64,
}

/// Weighted linear solve for the two amplitudes at fixed exponent.
fn amplitudes(t: &[f64], y: &[f64], exponent: f64, q: f64) -> Option<(f64, f64, f64)> {
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let basis = |ti: f64| {
        let l = ti.ln();
        let p = ti.powf(exponent);
        (p * l.powf(q), p * l.powf(q - 1.0))
    };
    for (&ti, &yi) in t.iter().zip(y) {
        let (u, v) = basis(ti);
        // relative weighting
        let w = 1.0 / (yi * yi);
        s11 += w * u * u;
        s12 += w * u * v;
        s22 += w * v * v;
        b1 += w * u * yi;
        b2 += w * v * yi;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() <= 1e-14 * s11 * s22 || !det.is_finite() {
        return None;
    }
    let a = (b1 * s22 - b2 * s12) / det;
    let b = (s11 * b2 - s12 * b1) / det;
    let mut rss = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        let (u, v) = basis(ti);
        rss += ((a * u + b * v - yi) / yi).powi(2);
    }
    Some((a, b, (rss / t.len() as f64).sqrt()))
}

/// Variable projection over the exponent: amplitudes are solved linearly,
/// the exponent by a scan of `[lo, hi]` followed by golden-section refinement.
/// Times must exceed 1 so that `ln t > 0`.
pub fn fit_log_relaxation(t: &[f64], y: &[f64], q: f64, lo: f64, hi: f64) -> Result<LogFit> {
    check_samples(t, y, 4)?;
    if t.iter().any(|&x| x <= 1.0) || y.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::Domain("log fit needs t > 1 and finite non-zero values".into()));
    }
    let cost = |p: f64| amplitudes(t, y, p, q).map_or(f64::INFINITY, |r| r.2);
    let steps = 400;
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + i as f64 * h)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .expect("non-empty scan");
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > 1e-12 * (1.0 + best.abs()) {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let exponent = 0.5 * (a + b);
    let (coeff, sub_coeff, residual) = amplitudes(t, y, exponent, q)
        .ok_or_else(|| Error::Domain("log fit is singular for these samples".into()))?;
    Ok(LogFit {
        exponent,
        log_power: q,
        coeff,
        sub_coeff,
        residual,
    })
}

/// Best of [`fit_log_relaxation`] over the candidate log powers.
pub fn fit_log_relaxation_select(t: &[f64], y: &[f64], candidates: &[f64], lo: f64, hi: f64) -> Result<LogFit> {
    let mut best: Option<LogFit> = None;
    for &q in candidates {
        let fit = fit_log_relaxation(t, y, q, lo, hi)?;
        if best.is_none_or(|b| fit.residual < b.residual) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Domain("no candidate log powers".into()))
}
