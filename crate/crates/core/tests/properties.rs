use proptest::prelude::*;

use dephlab::asymptotics::{self, classify_energy_regime, long_time_expansion, EnergyRegime};
use dephlab::dynamics::{log_space, DephasingState};
use dephlab::energy::{self, QubitPreparation};
use dephlab::info_flow::{self, FlowDirection};
use dephlab::quadrature::{self, Kernel, Partition, QuadratureRequest};
use dephlab::scenario::Scenario;
use dephlab::spectral::{LowFreqTerm, SpectralModel};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn canonical() -> impl Strategy<Value = SpectralModel> {
    (0usize..3, 0.3f64..6.0, 0.1f64..3.0, 0.2f64..5.0, 0u32..3).prop_map(|(kind, a, l, wc, q)| match kind {
        0 => SpectralModel::exp_cutoff(a, l, wc).unwrap(),
        1 => SpectralModel::finite_support(a, l, wc).unwrap(),
        _ => SpectralModel::log_exp_cutoff(a, q as f64, l, wc).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn densities_are_non_negative(m in canonical()) {
        for w in log_space(1e-8 * m.scale_freq, 1e3 * m.scale_freq, 400) {
            prop_assert!(m.evaluate(w).unwrap() >= 0.0);
        }
    }

    #[test]
    fn thermal_density_grows_with_temperature(m in canonical(), t1 in 0.01f64..5.0, dt in 0.01f64..5.0) {
        for w in log_space(1e-4, 50.0, 60) {
            let j = m.evaluate(w).unwrap();
            let j1 = m.evaluate_thermal(w, t1).unwrap();
            let j2 = m.evaluate_thermal(w, t1 + dt).unwrap();
            prop_assert!(j1 >= j);
            prop_assert!(j2 >= j1);
        }
    }

    #[test]
    fn weighted_integral_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..40.0, cosine in any::<bool>()) {
        let kernel = if cosine { Kernel::Cosine } else { Kernel::Sine };
        let f = |w: f64| w.sqrt() * (-w).exp();
        let g = |w: f64| w * w * (-w).exp();
        let h = |w: f64| a * f(w) + b * g(w);
        let run = |fun: &(dyn Fn(f64) -> f64 + Sync), e: f64| {
            let req = QuadratureRequest::new(fun, kernel, t, Partition::exponential(1.0)).endpoint_exponent(e);
            quadrature::integrate_weighted(&req).unwrap().value
        };
        let lhs = run(&h, 0.5);
        let rhs = a * run(&f, 0.5) + b * run(&g, 2.0);
        let scale = a.abs() * run(&|w: f64| f(w).abs(), 0.5) + b.abs() * run(&|w: f64| g(w).abs(), 2.0);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * scale.abs().max(1.0));
    }

    #[test]
    fn decoherence_function_is_bounded_by_its_origin_value(m in canonical(), t in 0.0f64..200.0) {
        let s = DephasingState::new(&m, 0.0).unwrap();
        prop_assert!(s.lambda(t).unwrap().abs() <= s.eta1 * (1.0 + 1e-9));
        prop_assert!(rel(s.lambda(0.0).unwrap(), s.eta1) < 1e-10);
    }

    #[test]
    fn dephasing_exponent_derivative_is_twice_the_rate(a in 0.5f64..4.0, t in 0.05f64..30.0, temp in 0.0f64..2.0) {
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, temp).unwrap();
        let h = 1e-4;
        let d = (s.xi(t + h).unwrap() - s.xi(t - h).unwrap()) / (2.0 * h);
        let g = s.gamma(t).unwrap();
        prop_assert!((d - 2.0 * g).abs() <= 1e-6 * g.abs().max(1e-3), "d {d} g {g}");
    }

    #[test]
    fn d0_matches_textbook_form(z in -0.999f64..0.999, w0 in -5.0f64..5.0, tp in 0.05f64..5.0) {
        let p = QubitPreparation::new(w0, z, tp).unwrap();
        let x = (w0 / tp).tanh();
        let textbook = 2.0 * (1.0 + z * (x - z) / (1.0 - z * x));
        prop_assert!(rel(p.d0().unwrap(), textbook) < 1e-10);
        prop_assert!(p.d0().unwrap() > 0.0);
    }

    #[test]
    fn d0_vanishes_for_pure_eigenstates(w0 in -5.0f64..5.0, tp in 0.0f64..5.0, up in any::<bool>()) {
        let z = if up { 1.0 } else { -1.0 };
        prop_assert_eq!(energy::d0(&QubitPreparation::new(w0, z, tp).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn energy_trajectory_is_linear_in_coupling(m in canonical(), k in 0.1f64..10.0, z in -0.9f64..0.9) {
        let prep = QubitPreparation::new(1.0, z, 1.0).unwrap();
        let m2 = m.scaled(k).unwrap();
        let (s1, s2) = (DephasingState::new(&m, 0.0).unwrap(), DephasingState::new(&m2, 0.0).unwrap());
        let times = log_space(1e-2, 1e2, 12);
        let e1 = energy::bath_energy(&prep, &s1, &times, None, None).unwrap();
        let e2 = energy::bath_energy(&prep, &s2, &times, None, None).unwrap();
        prop_assert!(rel(e2.asymptote_delta, k * e1.asymptote_delta) < 1e-10);
        for (a, b) in e1.bath_delta.iter().zip(&e2.bath_delta) {
            prop_assert!((b - k * a).abs() <= 1e-9 * (k * e1.asymptote_delta).abs());
        }
        for (a, b) in e1.bath_delta.iter().zip(&e1.correlation_delta) {
            prop_assert_eq!(a + b, 0.0);
        }
        if let (Ok(l1), Ok(l2)) = (long_time_expansion(&prep, &m), long_time_expansion(&prep, &m2)) {
            prop_assert!(rel(l2.leading().coeff, k * l1.leading().coeff) < 1e-12);
            prop_assert_eq!(l1.leading().power, l2.leading().power);
        }
    }

    #[test]
    fn energy_rises_exactly_where_decoherence_falls(a in 0.5f64..6.0, t in 0.1f64..20.0) {
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, 0.0).unwrap();
        let prep = QubitPreparation::new(1.0, 0.2, 1.0).unwrap();
        let h = 1e-3;
        let e = energy::bath_energy(&prep, &s, &[t - h, t + h], None, None).unwrap();
        let de = e.bath_delta[1] - e.bath_delta[0];
        let dl = s.lambda(t + h).unwrap() - s.lambda(t - h).unwrap();
        prop_assume!(dl.abs() > 1e-12);
        prop_assert_eq!(de > 0.0, dl < 0.0);
    }

    #[test]
    fn class_one_and_class_two_agree_for_natural_log_powers(
        a in prop_oneof![0.3f64..0.95, 1.05f64..2.95, 3.05f64..4.95],
        n in 0u32..3,
        c in 0.2f64..3.0,
    ) {
        let prep = QubitPreparation::new(1.0, 0.0, 1.0).unwrap();
        let t = vec![LowFreqTerm::new(a, n as f64, c)];
        let m1 = SpectralModel::class1(t.clone(), 1.0, 1.0, 2.0).unwrap();
        let m2 = SpectralModel::class2(t, 1.0, 1.0, 2.0).unwrap();
        let (l1, l2) = (long_time_expansion(&prep, &m1).unwrap(), long_time_expansion(&prep, &m2).unwrap());
        prop_assert!(rel(l2.leading().coeff, l1.leading().coeff) < 1e-10);
        prop_assert_eq!(l1.leading().power, l2.leading().power);
        prop_assert_eq!(l1.leading().log_power, l2.leading().log_power);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn measure_is_additive_and_monotone(a in 2.6f64..5.0, t1 in 20.0f64..200.0, k in 1.5f64..5.0) {
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, 0.0).unwrap();
        let n1 = info_flow::non_markovianity(&s, t1).unwrap();
        let n2 = info_flow::non_markovianity(&s, k * t1).unwrap();
        let sum: f64 = n1.contributions.iter().sum();
        prop_assert!(rel(n1.value, sum) <= 1e-10 || n1.value == sum);
        prop_assert!(n2.value >= n1.value * (1.0 - 1e-9));
    }

    #[test]
    fn measure_does_not_depend_on_preparation(a in 1.5f64..5.0, z1 in -0.9f64..0.9, z2 in -0.9f64..0.9) {
        // the rate only sees the bath; z enters the energy, not the coherence
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let r1 = info_flow::correspondence_report(&QubitPreparation::new(1.0, z1, 2.0).unwrap(), &m, 0.0, 200.0).unwrap();
        let r2 = info_flow::correspondence_report(&QubitPreparation::new(1.0, z2, 2.0).unwrap(), &m, 0.0, 200.0).unwrap();
        prop_assert_eq!(r1.measure.value, r2.measure.value);
        prop_assert_eq!(r1.intervals.len(), r2.intervals.len());
    }
}

#[test]
fn empty_intervals_give_zero_measure() {
    for a in [0.5, 1.0, 1.5, 2.0] {
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, 0.0).unwrap();
        let n = info_flow::non_markovianity(&s, 1e3).unwrap();
        assert!(n.contributions.is_empty(), "alpha {a}");
        assert_eq!(n.value.to_bits(), 0.0f64.to_bits(), "alpha {a}");
        let empty = info_flow::measure_over(&s, &[], 1e3).unwrap();
        assert_eq!(empty.value.to_bits(), 0.0f64.to_bits());
    }
}

#[test]
fn classifier_follows_interval_table_without_logs() {
    let prep = QubitPreparation::new(1.0, 0.0, 1.0).unwrap();
    for a in [0.3, 0.5, 0.9, 1.5, 2.0, 2.5, 3.2, 4.0, 4.8, 5.5, 6.0, 7.5, 8.2] {
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let u = long_time_expansion(&prep, &m).unwrap().leading().coeff;
        let cos = (std::f64::consts::PI * a / 2.0).cos();
        assert_eq!(u.signum(), -cos.signum(), "alpha {a}");
        let table = if a < 1.0 || asymptotics::in_backflow_band(a) {
            EnergyRegime::LongTimeIncrease
        } else {
            EnergyRegime::LongTimeDecrease
        };
        assert_eq!(classify_energy_regime(&prep, &m), table, "alpha {a}");
        let lit = asymptotics::literal_energy_regime(&prep, &m).unwrap();
        assert_eq!(lit.unconditional, table, "alpha {a}");
    }
}

#[test]
fn thermal_flow_table_matches_negative_rate_scan() {
    for a in [1.5, 2.0, 2.5, 3.5, 4.0, 4.5] {
        let m = SpectralModel::exp_cutoff(a, 1.0, 1.0).unwrap();
        let s = DephasingState::new(&m, 1.0).unwrap();
        let intervals = info_flow::find_negative_intervals(&s, 1e3).unwrap();
        let late = intervals.iter().any(|iv| iv.t_end > 10.0);
        let table = info_flow::literal_flow_direction(&m).unwrap().unconditional;
        assert_eq!(late, table == FlowDirection::Backflow, "alpha {a}");
    }
}

#[test]
fn effective_config_round_trips() {
    let text = r#"
name = "rt"
analyses = ["trajectory", "regimes", "mellin_check"]
T = 0.5
[model]
class = "class2"
terms = [[2.5, -0.5, 1.0], [3.0, 0.0, 0.25]]
omega_c = 2.0
chi0 = 4.0
[preparation]
omega0 = 1.5
z = -0.25
T_prep = 3.0
[grid]
kind = "uniform"
start = 0.0
end = 10.0
count = 11
[sweep]
z = [-0.5, 0.5]
"#;
    let s = Scenario::parse(text).unwrap();
    let echo = s.to_toml();
    let again = Scenario::parse(&echo).unwrap();
    assert_eq!(s, again);
    assert_eq!(echo, again.to_toml());
}
