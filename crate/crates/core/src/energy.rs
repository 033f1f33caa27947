//! Bath and correlation energy for the correlated preparation obtained by a
//! selective measurement of the qubit:
//! `eps_E(t) = eps_E(0) + d0 (eta_1 - Lambda(t))` and
//! `eps_SE(t) = eps_env - eps_E(t)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::DephasingState;
use crate::error::{domain, Result};
use crate::quadrature::{self, Partition};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitPreparation {
    /// Qubit transition frequency.
    pub omega0: f64,
    /// `<phi_0| sigma_3 |phi_0>`
    pub z: f64,
    /// Temperature of the equilibrium state before the measurement.
    #[serde(rename = "T_prep")]
    pub t_prep: f64,
}

impl QubitPreparation {
    pub fn new(omega0: f64, z: f64, t_prep: f64) -> Result<Self> {
        let p = QubitPreparation { omega0, z, t_prep };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z.abs() <= 1.0) {
            return Err(domain(format!("z must lie in [-1, 1], got {}", self.z)));
        }
        if !(self.t_prep >= 0.0) || !self.t_prep.is_finite() {
            return Err(domain(format!("T_prep must be finite and non-negative, got {}", self.t_prep)));
        }
        if !self.omega0.is_finite() {
            return Err(domain(format!("omega0 must be finite, got {}", self.omega0)));
        }
        Ok(())
    }

    pub fn d0(&self) -> Result<f64> {
        d0(self)
    }
}

/// `d0 = 2 (1 + z (tanh x - z) / (1 - z tanh x))`, `x = omega0 / T_prep`,
/// evaluated as `2 (1 - z^2) / (1 - z tanh x)`. At `T_prep = 0` the limit
/// `2 (1 + z)` is used for `|z| < 1`.
pub fn d0(prep: &QubitPreparation) -> Result<f64> {
    prep.validate()?;
    let z = prep.z;
    if z.abs() == 1.0 {
        return Ok(0.0);
    }
    let tanh = if prep.t_prep == 0.0 {
        // tanh(omega0 / T) at T -> 0+
        if prep.omega0 == 0.0 {
            0.0
        } else {
            prep.omega0.signum()
        }
    } else {
        (prep.omega0 / prep.t_prep).tanh()
    };
    Ok(2.0 * (1.0 - z * z) / (1.0 - z * tanh))
}

/// Density of bath modes entering the initial thermal energy.
#[derive(Clone)]
pub enum ModeDensity {
    /// Discrete mode frequencies, each with unit weight.
    Discrete(Vec<f64>),
    /// Continuous density `r(w)` with a quadrature partition describing its tail.
    Continuous {
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        partition: Partition,
    },
}

impl std::fmt::Debug for ModeDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeDensity::Discrete(w) => f.debug_tuple("Discrete").field(&w.len()).finish(),
            ModeDensity::Continuous { partition, .. } => f
                .debug_struct("Continuous")
                .field("partition", partition)
                .finish_non_exhaustive(),
        }
    }
}

impl ModeDensity {
    /// `r(w) = exp(-w / scale)`
    pub fn exponential(scale: f64) -> Self {
        ModeDensity::Continuous {
            density: Arc::new(move |w: f64| (-w / scale).exp()),
            partition: Partition::exponential(scale),
        }
    }
}

/// `w / (exp(w/T) - 1)`, with the limit `T` at `w = 0`.
fn bose_energy(w: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        return 0.0;
    }
    let x = w / temperature;
    if x == 0.0 {
        temperature
    } else if x > 700.0 {
        0.0
    } else {
        w / x.exp_m1()
    }
}

/// `eps_E(0) = sum_k w_k / (exp(w_k/T) - 1) + eta_1`, or the continuum
/// integral `int w r(w) / (exp(w/T) - 1) dw + eta_1`.
pub fn bath_energy_initial(model: &SpectralModel, density: &ModeDensity, t_prep: f64) -> Result<f64> {
    if !(t_prep >= 0.0) || !t_prep.is_finite() {
        return Err(domain(format!("T_prep must be finite and non-negative, got {t_prep}")));
    }
    let eta1 = model.moment_eta1()?;
    let thermal = match density {
        ModeDensity::Discrete(freqs) => {
            if freqs.iter().any(|w| !(*w >= 0.0)) {
                return Err(domain("mode frequencies must be non-negative"));
            }
            freqs.iter().map(|&w| bose_energy(w, t_prep)).sum()
        }
        ModeDensity::Continuous { density, partition } => {
            if t_prep == 0.0 {
                0.0
            } else {
                let f = |w: f64| density(w) * bose_energy(w, t_prep);
                let scale = partition.scale.min(t_prep);
                let part = Partition { scale, ..*partition };
                quadrature::integrate_moment(&f, part, 0.0, quadrature::DEFAULT_TOLERANCE)?.value
            }
        }
    };
    Ok(thermal + eta1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrajectory {
    pub times: Vec<f64>,
    /// `eps_E(t) - eps_E(0)`
    pub bath_delta: Vec<f64>,
    /// `eps_SE(t) - eps_SE(0) = -(eps_E(t) - eps_E(0))`
    pub correlation_delta: Vec<f64>,
    /// `eps_E(inf) - eps_E(0) = d0 eta_1`
    pub asymptote_delta: f64,
    /// Absolute `eps_E(0)`; `None` marks a relative-only trajectory.
    pub initial: Option<f64>,
    pub epsilon_env: Option<f64>,
    pub d0: f64,
}

impl EnergyTrajectory {
    pub fn is_relative_only(&self) -> bool {
        self.initial.is_none()
    }

    pub fn bath_absolute(&self) -> Option<Vec<f64>> {
        let e0 = self.initial?;
        Some(self.bath_delta.iter().map(|d| e0 + d).collect())
    }

    /// `eps_SE(t) = eps_env - eps_E(t)`, needs both `eps_env` and `eps_E(0)`.
    pub fn correlation_absolute(&self) -> Option<Vec<f64>> {
        let env = self.epsilon_env?;
        Some(self.bath_absolute()?.iter().map(|e| env - e).collect())
    }

    pub fn asymptote(&self) -> Option<f64> {
        self.initial.map(|e0| e0 + self.asymptote_delta)
    }
}

/// Bath-energy trajectory on `times` (non-negative, ascending).
pub fn bath_energy(
    prep: &QubitPreparation,
    state: &DephasingState<'_>,
    times: &[f64],
    initial: Option<f64>,
    epsilon_env: Option<f64>,
) -> Result<EnergyTrajectory> {
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(domain("times must be non-negative and ascending"));
    }
    let d0 = d0(prep)?;
    let bath_delta: Vec<f64> = if d0 == 0.0 {
        vec![0.0; times.len()]
    } else {
        times
            .par_iter()
            .map(|&t| state.lambda_deficit(t).map(|v| d0 * v))
            .collect::<Result<_>>()?
    };
    let correlation_delta = bath_delta.iter().map(|d| -d).collect();
    Ok(EnergyTrajectory {
        times: times.to_vec(),
        bath_delta,
        correlation_delta,
        asymptote_delta: d0 * state.eta1,
        initial,
        epsilon_env,
        d0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTimeCoefficient {
    /// `l_E = d0 int w J(w) dw / 2`
    pub l_e: f64,
    /// False when the high-frequency decay is too slow for the quadratic law.
    pub law_applies: bool,
}

/// Coefficient of the quadratic short-time growth `eps_E(t) ~ eps_E(0) + l_E t^2`.
pub fn short_time_coefficient(prep: &QubitPreparation, model: &SpectralModel) -> Result<ShortTimeCoefficient> {
    let d0 = d0(prep)?;
    let law_applies = model.short_time_law_applies();
    if d0 == 0.0 {
        return Ok(ShortTimeCoefficient { l_e: 0.0, law_applies });
    }
    let moment = match model.moment_omega1() {
        Ok(v) => v,
        Err(_) if !law_applies => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(ShortTimeCoefficient {
        l_e: d0 * moment / 2.0,
        law_applies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn d0_values() {
        assert_eq!(QubitPreparation::new(1.0, 0.0, 1.0).unwrap().d0().unwrap(), 2.0);
        assert_eq!(QubitPreparation::new(1.0, 1.0, 1.0).unwrap().d0().unwrap(), 0.0);
        assert_eq!(QubitPreparation::new(1.0, -1.0, 1.0).unwrap().d0().unwrap(), 0.0);
        let d = QubitPreparation::new(1.0, 0.5, 1.0).unwrap().d0().unwrap();
        assert!((d - 2.422_469_188_455_187_7).abs() < 1e-13, "{d}");
        assert!(QubitPreparation::new(1.0, 1.5, 1.0).is_err());
        // large omega0/T_prep stays finite and tends to 2(1+z)
        let d = QubitPreparation::new(1e6, 0.3, 1.0).unwrap().d0().unwrap();
        assert!((d - 2.6).abs() < 1e-12);
        let d = QubitPreparation::new(1.0, 0.3, 0.0).unwrap().d0().unwrap();
        assert!((d - 2.6).abs() < 1e-15);
    }

    #[test]
    fn initial_energy() {
        let m = SpectralModel::exp_cutoff(1.0, 1.0, 1.0).unwrap();
        let single = bath_energy_initial(&m, &ModeDensity::Discrete(vec![2.0]), 0.5).unwrap();
        assert!((single - (2.0 / (4.0f64.exp() - 1.0) + 1.0)).abs() < 1e-14);
        let cold = bath_energy_initial(&m, &ModeDensity::exponential(1.0), 0.0).unwrap();
        assert_eq!(cold, 1.0);
        let warm = bath_energy_initial(&m, &ModeDensity::exponential(1.0), 1.0).unwrap();
        assert!((warm - 1.0 - (PI * PI / 6.0 - 1.0)).abs() < 1e-10, "{warm}");
    }

    #[test]
    fn trajectory_conserves_environmental_energy() {
        let m = SpectralModel::exp_cutoff(2.0, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, 0.0).unwrap();
        let prep = QubitPreparation::new(1.0, 0.2, 1.0).unwrap();
        let times = [0.0, 0.1, 1.0, 10.0];
        let tr = bath_energy(&prep, &s, &times, None, None).unwrap();
        assert!(tr.is_relative_only());
        assert_eq!(tr.bath_delta[0], 0.0);
        for (b, c) in tr.bath_delta.iter().zip(&tr.correlation_delta) {
            assert_eq!(b + c, 0.0);
        }
        let fixed = QubitPreparation::new(1.0, 1.0, 1.0).unwrap();
        let flat = bath_energy(&fixed, &s, &times, Some(3.0), Some(5.0)).unwrap();
        assert!(flat.bath_delta.iter().all(|d| *d == 0.0));
        assert_eq!(flat.correlation_absolute().unwrap(), vec![2.0; 4]);
    }

    #[test]
    fn short_time_coefficient_values() {
        let m = SpectralModel::exp_cutoff(1.0, 1.0, 1.0).unwrap();
        let prep = QubitPreparation::new(1.0, 0.0, 1.0).unwrap();
        let c = short_time_coefficient(&prep, &m).unwrap();
        assert_eq!(c.l_e, 2.0);
        assert!(c.law_applies);
        let pure = QubitPreparation::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(short_time_coefficient(&pure, &m).unwrap().l_e, 0.0);
        let slow = SpectralModel::class2(
            vec![crate::spectral::LowFreqTerm::new(1.0, 0.5, 1.0)],
            1.0,
            1.0,
            2.0,
        )
        .unwrap();
        let c = short_time_coefficient(&prep, &slow).unwrap();
        assert!(!c.law_applies);
    }
}
