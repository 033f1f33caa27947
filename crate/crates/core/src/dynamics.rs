//! Dephasing dynamics: `Lambda(t)`, the rates `gamma_0(t)` and `gamma_T(t)`,
//! the accumulated exponent `Xi(t) = 2 int_0^t gamma` and the coherence factor.
//!
//! `gamma_T` uses the thermal density with a `sin(w t)` kernel,
//! `int J_T(w)/w sin(w t) dw`, so that it reduces to `gamma_0` as `T -> 0`.
//! `Xi` is computed without nested quadrature as
//! `2 int J_(T)(w)/w^2 (1 - cos w t) dw`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{self, Kernel, QuadratureRequest};
use crate::spectral::{coth, SpectralModel};
use crate::special::gamma;

/// Closed forms for `J(w) = lambda w_c (w/w_c)^alpha exp(-w/w_c)` with `u = w_c t`.
pub mod closed {
    use super::gamma;

    fn polar(u: f64) -> (f64, f64) {
        (u.atan(), (u * u).ln_1p())
    }

    /// `Lambda(t) = lambda w_c Gamma(alpha) (1+u^2)^(-alpha/2) cos(alpha atan u)`
    pub fn lambda(alpha: f64, amplitude: f64, omega_c: f64, t: f64) -> f64 {
        let (theta, l) = polar(omega_c * t);
        amplitude * omega_c * gamma(alpha) * (-0.5 * alpha * l).exp() * (alpha * theta).cos()
    }

    /// `eta_1 - Lambda(t)` without cancellation at small `t`.
    pub fn lambda_deficit(alpha: f64, amplitude: f64, omega_c: f64, t: f64) -> f64 {
        let (theta, l) = polar(omega_c * t);
        let a = -0.5 * alpha * l;
        let b = alpha * theta;
        let s = (0.5 * b).sin();
        amplitude * omega_c * gamma(alpha) * (2.0 * s * s - b.cos() * a.exp_m1())
    }

    /// `gamma_0(t) = lambda w_c Gamma(alpha) (1+u^2)^(-alpha/2) sin(alpha atan u)`
    pub fn gamma0(alpha: f64, amplitude: f64, omega_c: f64, t: f64) -> f64 {
        let (theta, l) = polar(omega_c * t);
        amplitude * omega_c * gamma(alpha) * (-0.5 * alpha * l).exp() * (alpha * theta).sin()
    }

    /// `Xi(t) = 2 lambda Gamma(alpha-1) [1 - (1+u^2)^((1-alpha)/2) cos((alpha-1) atan u)]`,
    /// continued analytically to `alpha in (0, 1]`; `lambda ln(1+u^2)` at `alpha = 1`.
    pub fn xi(alpha: f64, amplitude: f64, omega_c: f64, t: f64) -> f64 {
        let (theta, l) = polar(omega_c * t);
        let s = alpha - 1.0;
        if s.abs() < 1e-9 {
            // first-order expansion in s around the ohmic value
            let base = l;
            let correction = s * (theta * theta - 0.25 * l * l - 0.577_215_664_901_532_9 * l);
            return amplitude * (base + correction);
        }
        let a = -0.5 * s * l;
        let b = s * theta;
        let h = (0.5 * b).sin();
        2.0 * amplitude * gamma(s) * (2.0 * h * h - b.cos() * a.exp_m1())
    }

    /// `-int J(w) sin(w t) dw = d Lambda / dt`
    pub fn lambda_rate(alpha: f64, amplitude: f64, omega_c: f64, t: f64) -> f64 {
        let (theta, l) = polar(omega_c * t);
        let a1 = alpha + 1.0;
        -amplitude * omega_c * omega_c * gamma(a1) * (-0.5 * a1 * l).exp() * (a1 * theta).sin()
    }
}

/// How `Lambda`, `gamma_0` and `Xi` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Closed forms for the exponential-cutoff family at `T = 0`, quadrature otherwise.
    #[default]
    Auto,
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct DephasingState<'a> {
    pub model: &'a SpectralModel,
    /// Temperature of the factorized thermal bath; `0` selects the zero-temperature path.
    pub temperature: f64,
    pub eta1: f64,
    pub evaluator: Evaluator,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsSample {
    pub t: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub xi: f64,
    pub coherence: f64,
}

impl<'a> DephasingState<'a> {
    pub fn new(model: &'a SpectralModel, temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(domain(format!("temperature must be finite and non-negative, got {temperature}")));
        }
        Ok(DephasingState {
            model,
            temperature,
            eta1: model.moment_eta1()?,
            evaluator: Evaluator::Auto,
            tolerance: quadrature::DEFAULT_TOLERANCE,
        })
    }

    pub fn with_evaluator(mut self, evaluator: Evaluator) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(domain(format!("tolerance must be positive, got {tolerance}")));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    fn closed_form(&self) -> Option<f64> {
        match self.evaluator {
            Evaluator::Auto => self.model.is_exp_cutoff(),
            Evaluator::Quadrature => None,
        }
    }

    fn check_time(t: f64) -> Result<()> {
        if t >= 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(domain(format!("time must be finite and non-negative, got {t}")))
        }
    }

    fn weighted(&self, f: &(dyn Fn(f64) -> f64 + Sync), kernel: Kernel, t: f64, exponent: f64) -> Result<f64> {
        let req = QuadratureRequest::new(f, kernel, t, self.model.partition())
            .endpoint_exponent(exponent)
            .tolerance(self.tolerance);
        Ok(quadrature::integrate_weighted(&req)?.value)
    }

    /// `Lambda(t) = int J(w)/w cos(w t) dw`
    pub fn lambda(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        if t == 0.0 {
            return Ok(self.eta1);
        }
        let m = self.model;
        if let Some(alpha) = self.closed_form() {
            return Ok(closed::lambda(alpha, m.amplitude, m.cutoff_freq, t));
        }
        let f = |w: f64| m.spectral_over_omega(w);
        self.weighted(&f, Kernel::Cosine, t, m.endpoint_exponent())
    }

    /// `eta_1 - Lambda(t)`, accurate also when the difference is tiny.
    pub fn lambda_deficit(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let m = self.model;
        if let Some(alpha) = self.closed_form() {
            return Ok(closed::lambda_deficit(alpha, m.amplitude, m.cutoff_freq, t));
        }
        // int J/w (1 - cos w t) dw
        let f = |w: f64| m.spectral_over_omega(w);
        self.weighted(&f, Kernel::Versine, t, m.endpoint_exponent())
    }

    /// `d Lambda / dt = -int J(w) sin(w t) dw`
    pub fn lambda_rate(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        let m = self.model;
        if let Some(alpha) = self.closed_form() {
            return Ok(closed::lambda_rate(alpha, m.amplitude, m.cutoff_freq, t));
        }
        let f = |w: f64| m.spectral(w);
        Ok(-self.weighted(&f, Kernel::Sine, t, m.endpoint_exponent() + 1.0)?)
    }

    /// `gamma_0(t) = int J(w)/w sin(w t) dw`
    pub fn gamma0(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let m = self.model;
        if let Some(alpha) = self.closed_form() {
            return Ok(closed::gamma0(alpha, m.amplitude, m.cutoff_freq, t));
        }
        let f = |w: f64| m.spectral_over_omega(w);
        self.weighted(&f, Kernel::Sine, t, m.endpoint_exponent())
    }

    /// `gamma_T(t) = int J(w) coth(w/2T)/w sin(w t) dw`; requires `T > 0`.
    pub fn gamma_t(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        let temp = self.temperature;
        if !(temp > 0.0) {
            return Err(domain("gamma_T needs T > 0; use gamma0 at zero temperature"));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let m = self.model;
        let f = move |w: f64| m.spectral_over_omega(w) * coth(w / (2.0 * temp));
        self.weighted(&f, Kernel::Sine, t, m.endpoint_exponent() - 1.0)
    }

    /// The rate entering the master equation: `gamma_0` at `T = 0`, `gamma_T` otherwise.
    pub fn gamma(&self, t: f64) -> Result<f64> {
        if self.temperature > 0.0 {
            self.gamma_t(t)
        } else {
            self.gamma0(t)
        }
    }

    /// `Xi(t) = 2 int J_(T)(w)/w^2 (1 - cos w t) dw`
    pub fn xi(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let m = self.model;
        let temp = self.temperature;
        if temp == 0.0 {
            if let Some(alpha) = self.closed_form() {
                return Ok(closed::xi(alpha, m.amplitude, m.cutoff_freq, t));
            }
            let f = |w: f64| m.spectral_over_omega(w) / w;
            return Ok(2.0 * self.weighted(&f, Kernel::Versine, t, m.endpoint_exponent() - 1.0)?);
        }
        let f = move |w: f64| m.spectral_over_omega(w) / w * coth(w / (2.0 * temp));
        Ok(2.0 * self.weighted(&f, Kernel::Versine, t, m.endpoint_exponent() - 2.0)?)
    }

    /// `exp(-Xi(t))`
    pub fn coherence(&self, t: f64) -> Result<f64> {
        Ok((-self.xi(t)?).exp())
    }

    /// `Xi(t)` grows without bound for `alpha0 <= 1` at `T > 0`.
    pub fn xi_unbounded(&self) -> bool {
        self.temperature > 0.0 && self.model.alpha0() <= 1.0
    }

    pub fn sample(&self, t: f64) -> Result<DynamicsSample> {
        let xi = self.xi(t)?;
        Ok(DynamicsSample {
            t,
            lambda: self.lambda(t)?,
            gamma: self.gamma(t)?,
            xi,
            coherence: (-xi).exp(),
        })
    }

    /// Samples on `times`, evaluated in parallel, returned in input order.
    pub fn trajectory(&self, times: &[f64]) -> Result<Vec<DynamicsSample>> {
        times.par_iter().map(|&t| self.sample(t)).collect()
    }
}

/// Sampling grid for trajectories, in units of `1/omega_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeGrid {
    Uniform { start: f64, end: f64, count: usize },
    Log { start: f64, end: f64, count: usize },
    Explicit { points: Vec<f64> },
}

impl TimeGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            TimeGrid::Uniform { start, end, count } => {
                if *count < 2 || !(end > start) || !(*start >= 0.0) {
                    return Err(domain("uniform grid needs 0 <= start < end and count >= 2"));
                }
                let h = (end - start) / (*count - 1) as f64;
                (0..*count).map(|i| start + i as f64 * h).collect()
            }
            TimeGrid::Log { start, end, count } => {
                if *count < 2 || !(end > start) || !(*start > 0.0) {
                    return Err(domain("log grid needs 0 < start < end and count >= 2"));
                }
                log_space(*start, *end, *count)
            }
            TimeGrid::Explicit { points } => points.clone(),
        };
        if pts.is_empty() {
            return Err(domain("time grid is empty"));
        }
        if pts.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(domain("time grid points must be finite and non-negative"));
        }
        if pts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("time grid must be strictly increasing"));
        }
        Ok(pts)
    }
}

/// `count` points log-spaced on `[start, end]`, endpoints exact.
pub fn log_space(start: f64, end: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let (a, b) = (start.ln(), end.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                start
            } else if i == count - 1 {
                end
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ohmic_closed_forms() {
        let m = SpectralModel::exp_cutoff(1.0, 1.0, 2.0).unwrap();
        let s = DephasingState::new(&m, 0.0).unwrap();
        for &t in &[0.0, 0.3, 1.0, 7.0] {
            let u: f64 = 2.0 * t;
            assert!(rel(s.lambda(t).unwrap(), 2.0 / (1.0 + u * u)) < 1e-14);
            let g = s.gamma0(t).unwrap();
            assert!((g - 4.0 * t / (1.0 + u * u)).abs() < 1e-14);
            assert!((s.xi(t).unwrap() - (u * u).ln_1p()).abs() < 1e-14);
        }
    }

    // relative error with an absolute floor at 1e-14 of the natural scale
    fn close(a: f64, b: f64, scale: f64) -> bool {
        (a - b).abs() <= (1e-8 * b.abs()).max(1e-14 * scale)
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for &alpha in &[0.5, 1.0, 2.0, 3.5] {
            let m = SpectralModel::exp_cutoff(alpha, 1.0, 1.0).unwrap();
            let fast = DephasingState::new(&m, 0.0).unwrap();
            let slow = fast.clone().with_evaluator(Evaluator::Quadrature);
            for &t in &[0.05, 1.0, 13.0, 150.0] {
                let a = fast.lambda(t).unwrap();
                let b = slow.lambda(t).unwrap();
                assert!(close(b, a, fast.eta1), "Lambda alpha={alpha} t={t}: {b} vs {a}");
                let a = fast.gamma0(t).unwrap();
                let b = slow.gamma0(t).unwrap();
                assert!(close(b, a, fast.eta1), "gamma0 alpha={alpha} t={t}: {b} vs {a}");
                let a = fast.xi(t).unwrap();
                let b = slow.xi(t).unwrap();
                assert!(close(b, a, fast.eta1), "Xi alpha={alpha} t={t}: {b} vs {a}");
                let a = fast.lambda_deficit(t).unwrap();
                let b = slow.lambda_deficit(t).unwrap();
                assert!(close(b, a, fast.eta1), "deficit alpha={alpha} t={t}: {b} vs {a}");
            }
        }
    }

    #[test]
    fn xi_near_ohmic_is_continuous() {
        let t = 3.0;
        let exact = closed::xi(1.0, 1.0, 1.0, t);
        let above = closed::xi(1.0 + 2e-9, 1.0, 1.0, t);
        let further = closed::xi(1.0 + 1e-6, 1.0, 1.0, t);
        assert!((above - exact).abs() < 1e-8);
        assert!((further - exact).abs() < 1e-5);
    }

    #[test]
    fn gamma_t_requires_temperature_and_vanishes_at_zero() {
        let m = SpectralModel::exp_cutoff(3.0, 1.0, 1.0).unwrap();
        let cold = DephasingState::new(&m, 0.0).unwrap();
        assert!(cold.gamma_t(1.0).is_err());
        let warm = DephasingState::new(&m, 1.0).unwrap();
        assert_eq!(warm.gamma_t(0.0).unwrap(), 0.0);
    }

    #[test]
    fn low_temperature_rate_approaches_zero_temperature_rate() {
        let m = SpectralModel::exp_cutoff(2.0, 1.0, 1.0).unwrap();
        let cold = DephasingState::new(&m, 0.0).unwrap();
        let warm = DephasingState::new(&m, 1e-3).unwrap();
        for &t in &[0.5, 1.0, 5.0, 10.0] {
            let g0 = cold.gamma0(t).unwrap();
            let gt = warm.gamma_t(t).unwrap();
            assert!((gt - g0).abs() <= 0.01 * g0.abs().max(1e-3), "t={t}: {gt} vs {g0}");
        }
    }

    #[test]
    fn xi_derivative_is_twice_the_rate() {
        let m = SpectralModel::exp_cutoff(2.5, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, 0.5).unwrap();
        let h = 1e-4;
        for &t in &[0.5, 2.0, 6.0] {
            let fd = (s.xi(t + h).unwrap() - s.xi(t - h).unwrap()) / (2.0 * h);
            let g = s.gamma(t).unwrap();
            assert!(rel(fd, 2.0 * g) < 1e-6, "t={t}: {fd} vs {}", 2.0 * g);
        }
    }

    #[test]
    fn grids() {
        let g = TimeGrid::Log {
            start: 1e-2,
            end: 1e2,
            count: 5,
        };
        let p = g.points().unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p[0], 1e-2);
        assert_eq!(p[4], 1e2);
        assert!((p[2] - 1.0).abs() < 1e-14);
        assert!(TimeGrid::Explicit {
            points: vec![1.0, 1.0]
        }
        .points()
        .is_err());
    }
}
