use holoreg::phasegeom::*;
use holoreg::C64;
use proptest::prelude::*;

const Z: [f64; 3] = [0.0, 0.0, 1.0];
const LAMBDA: f64 = 500e-9;

fn k1() -> WaveVector {
    WaveVector::new(2.0 * std::f64::consts::PI / LAMBDA, 0.0, 0.0)
}

#[test]
fn lattice_schedule_is_orthogonal() {
    let geom = make_lattice(2000, 5e-3, Z).unwrap();
    let angles = angle_schedule(geom.pattern_length(), LAMBDA, -50, 50).unwrap();
    let reg = ModeRegister::evaluate(&geom, k1(), &angles).unwrap();
    assert_eq!(reg.len(), 101);
    assert!(reg.crosstalk_bound() <= 1e-12, "{}", reg.crosstalk_bound());
}

#[test]
fn jittered_lattice_stays_below_tolerance() {
    let geom = make_lattice(2000, 5e-3, Z).unwrap();
    let angles = angle_schedule(geom.pattern_length(), LAMBDA, -50, 50).unwrap();
    for seed in 0..5 {
        let g = jitter(&geom, 1e-7, seed).unwrap();
        let reg = build_register(&g, k1(), &angles, DEFAULT_CROSSTALK_TOL).unwrap();
        assert!(reg.crosstalk_bound() < 1e-2);
    }
}

#[test]
fn random_overlap_is_order_inverse_sqrt_n() {
    let n = 100_000;
    let seeds: Vec<u64> = (0..4).collect();
    let m = median_random_overlap(n, 5e-3, LAMBDA, 3, &seeds).unwrap();
    let expect = 1.0 / (n as f64).sqrt();
    assert!(m > expect / 3.0 && m < expect * 3.0, "median {m}");
}

#[test]
fn crosstalk_error_reports_pair() {
    // Two nearly identical angles on a short chain overlap strongly.
    let geom = make_lattice(10, 1e-5, Z).unwrap();
    let err = build_register(&geom, k1(), &[0.0, 1e-9], 1e-2).unwrap_err();
    assert!(err.to_string().contains('0') && err.to_string().contains('1'), "{err}");
}

#[test]
fn unreachable_angle_is_an_error() {
    assert!(angle_schedule(1e-6, LAMBDA, 0, 3).is_err());
}

#[test]
fn register_doc_serializes() {
    let geom = make_lattice(16, 1e-3, Z).unwrap();
    let angles = angle_schedule(geom.pattern_length(), LAMBDA, 0, 2).unwrap();
    let reg = build_register(&geom, k1(), &angles, 1e-2).unwrap();
    let v = serde_json::to_value(reg.to_doc()).unwrap();
    assert_eq!(v["angles_deg"].as_array().unwrap().len(), 3);
    assert_eq!(v["gram"].as_array().unwrap().len(), 9);
}

fn chain() -> impl Strategy<Value = EnsembleGeometry> {
    (2usize..40, 0u64..1000).prop_map(|(n, seed)| random_uniform(n, 1e-4, Z, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_hermitian_with_unit_diagonal(geom in chain(), a in -3i64..0, b in 1i64..4) {
        let angles = angle_schedule(geom.trap_length(), LAMBDA, a, b).unwrap();
        let reg = ModeRegister::evaluate(&geom, k1(), &angles).unwrap();
        for i in 0..reg.len() {
            prop_assert!((reg.gram(i, i) - C64::new(1.0, 0.0)).norm() < 1e-12);
            for j in 0..reg.len() {
                prop_assert!((reg.gram(i, j) - reg.gram(j, i).conj()).norm() < 1e-12);
                prop_assert!(reg.gram(i, j).norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn jitter_is_deterministic(geom in chain(), sigma in 0.0f64..1e-6, seed in 0u64..100) {
        let a = jitter(&geom, sigma, seed).unwrap();
        let b = jitter(&geom, sigma, seed).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn overlap_matches_gram(geom in chain(), n in 1i64..4) {
        let angles = angle_schedule(geom.trap_length(), LAMBDA, 0, n).unwrap();
        let reg = ModeRegister::evaluate(&geom, k1(), &angles).unwrap();
        let o = overlap(&geom, &reg.mode(0), &reg.mode(1));
        prop_assert!((o - reg.gram(0, 1)).norm() < 1e-12);
    }
}
