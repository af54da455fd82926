use std::sync::Arc;

use holoreg::dynamics::*;
use holoreg::hilbert::*;
use holoreg::phasegeom::make_lattice;
use holoreg::pulses::{Channel, PulseSchedule};
use holoreg::C64;
use proptest::prelude::*;

fn jc_basis() -> BasisRef {
    Arc::new(Basis::new(BasisConfig::new(1, 3, 3, true).with_levels(&[])).unwrap())
}

fn random_state(basis: &BasisRef, re: &[f64], im: &[f64]) -> StateVector {
    let amps = (0..basis.len())
        .map(|i| C64::new(re[i % re.len()], im[i % im.len()]))
        .collect();
    let mut s = StateVector::from_amplitudes(basis, amps).unwrap();
    s.normalize();
    s
}

fn driven(basis: &BasisRef, g: f64, sweep: f64, duration: f64) -> DrivenHamiltonian {
    let t = cpb_terms(basis).unwrap();
    let ramp = move |t: f64| sweep * (2.0 * t / duration - 1.0);
    let sched = PulseSchedule::from_fn(0.0, duration, 33, &[(Channel::DeltaCpb, &ramp)]).unwrap();
    DrivenHamiltonian::new(basis.len())
        .with_schedule(sched)
        .add_constant(t.exchange, g)
        .unwrap()
        .add_channel(t.cpb_number, Channel::DeltaCpb, 1.0)
        .unwrap()
}

#[test]
fn collective_rabi_scales_with_sqrt_n() {
    let p = SystemParams::reference();
    let g = p.g_eff().unwrap();
    for n in [1usize, 4, 9] {
        let geom = make_lattice(n, 1e-3, [0.0, 0.0, 1.0]).unwrap();
        let w = collective_rabi_frequency(&geom, &p, n).unwrap();
        let expect = (n as f64).sqrt() * g;
        assert!((w - expect).abs() <= 1e-6 * expect, "N={n}: {w} vs {expect}");
    }
}

#[test]
fn collective_rabi_rejects_mismatched_geometry() {
    let geom = make_lattice(3, 1e-3, [0.0, 0.0, 1.0]).unwrap();
    assert!(collective_rabi_frequency(&geom, &SystemParams::reference(), 4).is_err());
}

#[test]
fn loss_is_rate_times_occupancy() {
    let b = jc_basis();
    let s = StateVector::basis_state(
        &b,
        &BasisState {
            cavity_photons: 1,
            cpb_excited: false,
            molecular_excitations: vec![],
        },
    )
    .unwrap();
    let r = propagate(&s, &DrivenHamiltonian::new(b.len()), 0.0, 1e-6, &PropagationOptions::default()).unwrap();
    let p = SystemParams::reference();
    assert!((loss_probability(&r, &p) - p.kappa * 1e-6).abs() < 1e-15);
}

#[test]
fn tighter_tolerance_agrees() {
    let b = jc_basis();
    let h = driven(&b, 3e8, 4e9, 10e-9);
    let s = random_state(&b, &[0.3, -0.1, 0.7], &[0.2, 0.5]);
    let a = propagate(&s, &h, 0.0, 10e-9, &PropagationOptions::default().with_tolerance(1e-8)).unwrap();
    let c = propagate(&s, &h, 0.0, 10e-9, &PropagationOptions::default().with_tolerance(1e-12)).unwrap();
    let diff = a
        .final_state
        .amplitudes
        .iter()
        .zip(&c.final_state.amplitudes)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    assert!(diff < 1e-7, "{diff}");
}

#[test]
fn traces_and_summary_export() {
    let b = jc_basis();
    let h = driven(&b, 3e8, 4e9, 10e-9);
    let s = random_state(&b, &[1.0], &[0.0]);
    let opts = PropagationOptions::default().observe("photons", b.diagonal(|x| x.cavity_photons as f64));
    let r = propagate(&s, &h, 0.0, 10e-9, &opts).unwrap();
    let tr = r.trace("photons").unwrap();
    assert_eq!(tr.t.len(), tr.values.len());
    assert_eq!(*tr.t.last().unwrap(), 10e-9);
    let mut buf = Vec::new();
    r.write_traces_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("t,photons"));
    let v: serde_json::Value = serde_json::from_str(&r.summary_json().unwrap()).unwrap();
    assert!(v["norm_drift"].as_f64().unwrap() <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn propagation_preserves_norm(
        g in 1e7f64..1e9,
        sweep in 0.0f64..1e10,
        re in prop::collection::vec(-1.0f64..1.0, 1..6),
        im in prop::collection::vec(-1.0f64..1.0, 1..6),
    ) {
        prop_assume!(re.iter().any(|x| x.abs() > 1e-3));
        let b = jc_basis();
        let h = driven(&b, g, sweep, 5e-9);
        let s = random_state(&b, &re, &im);
        let r = propagate(&s, &h, 0.0, 5e-9, &PropagationOptions::default()).unwrap();
        prop_assert!(r.norm_drift <= 1e-8);
        prop_assert!((r.final_state.norm_sqr() - 1.0).abs() <= 1e-9);
        let back = propagate(&r.final_state, &h, 5e-9, 0.0, &PropagationOptions::default()).unwrap();
        prop_assert!(1.0 - back.final_state.inner(&s).norm_sqr() < 1e-8);
    }
}
