use holoreg::gates::run_swap;
use holoreg::hilbert::{SystemParams, TWO_PI};
use holoreg::phasegeom::WaveVector;
use holoreg::pulses::*;
use proptest::prelude::*;

fn spec() -> StirapSpec {
    StirapSpec::standard(
        StirapDirection::Forward,
        WaveVector::new(1.0, 0.0, 0.0),
        WaveVector::new(0.0, 1.0, 0.0),
    )
}

#[test]
fn standard_stirap_is_adiabatic() {
    assert!(spec().adiabaticity() >= 10.0 * std::f64::consts::PI);
    let s = stirap_schedule(&spec(), 0.0, STIRAP_WINDOW, 401).unwrap();
    // Both envelopes have decayed at the window edges.
    for ch in [Channel::Omega1, Channel::Omega2] {
        let v = s.channel(ch).unwrap();
        assert!(v[0] < 1e-3 * spec().peak_rabi && v[v.len() - 1] < 1e-3 * spec().peak_rabi);
    }
}

#[test]
fn inverted_stirap_is_time_reversed() {
    let f = stirap_schedule(&spec(), 0.0, STIRAP_WINDOW, 401).unwrap();
    let b = stirap_schedule(&spec().inverted(), 0.0, STIRAP_WINDOW, 401).unwrap();
    let r = f.time_reversed();
    for ch in [Channel::Omega1, Channel::Omega2] {
        for (x, y) in r.channel(ch).unwrap().iter().zip(b.channel(ch).unwrap()) {
            assert!((x - y).abs() <= 1e-9 * spec().peak_rabi);
        }
    }
}

#[test]
fn schedules_are_bit_identical_on_regeneration() {
    let a = sweep_schedule(&SweepSpec::cphase(4e10, 1e9, 5e-9), 1e9, 300).unwrap();
    let b = sweep_schedule(&SweepSpec::cphase(4e10, 1e9, 5e-9), 1e9, 300).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let c: PulseSchedule = serde_json::from_str(&json).unwrap();
    assert_eq!(a, c);
}

#[test]
fn default_swap_sweep_transfers_population() {
    let p = SystemParams::reference();
    let s = sweep_schedule(&SweepSpec::swap(20.0 * p.g_c, 100e-9), p.g_c, 2001).unwrap();
    let r = run_swap(&s, &p).unwrap();
    assert!(r.population_transfer.unwrap() >= 0.99, "{:?}", r.population_transfer);
}

#[test]
fn resampling_converges() {
    let p = SystemParams {
        g_c: TWO_PI * 200e6,
        ..SystemParams::reference()
    };
    let s = sweep_schedule(&SweepSpec::swap(20.0 * p.g_c, 20e-9), p.g_c, 1001).unwrap();
    let f1 = run_swap(&s, &p).unwrap().average_fidelity;
    let f2 = run_swap(&s.resample(4001).unwrap(), &p).unwrap().average_fidelity;
    assert!((f1 - f2).abs() <= 1e-6, "{f1} vs {f2}");
}

#[test]
fn csv_round_trip() {
    let s = stirap_schedule(&spec(), 0.0, STIRAP_WINDOW, 64).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = PulseSchedule::read_csv(buf.as_slice()).unwrap();
    assert_eq!(s, back);
}

proptest! {
    #[test]
    fn cphase_endpoints_match(far_ratio in 10.0f64..50.0, near in 0.0f64..5.0, n in 16usize..400) {
        let g = 1.0e9;
        let s = sweep_schedule(&SweepSpec::cphase(far_ratio * g, near * g, 5e-9), g, n).unwrap();
        let v = s.channel(Channel::DeltaCpb).unwrap();
        prop_assert_eq!(v[0], v[v.len() - 1]);
        prop_assert!(v.iter().all(|x| *x >= near * g - 1e-6 * g));
    }

    #[test]
    fn swap_sweep_is_monotone(far_ratio in 10.0f64..50.0, n in 16usize..400) {
        let g = 1.0e9;
        let s = sweep_schedule(&SweepSpec::swap(far_ratio * g, 5e-9), g, n).unwrap();
        let v = s.channel(Channel::DeltaCpb).unwrap();
        prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(v[0] < 0.0 && v[v.len() - 1] > 0.0);
    }

    #[test]
    fn small_endpoint_ratio_is_rejected(ratio in 0.0f64..9.99) {
        prop_assert!(sweep_schedule(&SweepSpec::swap(ratio * 1e9, 5e-9), 1e9, 100).is_err());
    }
}
