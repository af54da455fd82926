use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use holoreg::collective::RegisterState;
use holoreg::gates::GateReport;
use holoreg::hilbert::{SystemParams, TWO_PI};
use holoreg::optctl::*;
use holoreg::phasegeom::*;
use holoreg::protocol::*;
use holoreg::{Error, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const COUPLING: f64 = TWO_PI * 10e6;

fn register(k: usize) -> Arc<ModeRegister> {
    let lambda = 500e-9;
    let g = make_lattice(2 * k + 8, 1e-3, [0.0, 0.0, 1.0]).unwrap();
    let angles = angle_schedule(g.pattern_length(), lambda, 1, k as i64).unwrap();
    let k1 = WaveVector::new(TWO_PI / lambda, 0.0, 0.0);
    Arc::new(build_register(&g, k1, &angles, 1e-2).unwrap())
}

fn ideal() -> Calibration {
    Calibration::ideal(SystemParams::reference(), COUPLING).unwrap()
}

fn calibrated() -> &'static Calibration {
    static CELL: OnceLock<Calibration> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = SystemParams::reference();
        let run = |target, duration| -> GateReport {
            let init = default_initial(target, p.g_c, duration, 20).unwrap();
            optimize_gate(&init, target, &p, &OptimizerOptions::new(5000, 7)).unwrap().2
        };
        let swap = run(GateTarget::Swap, DEFAULT_SWAP_DURATION);
        let cz = run(GateTarget::Cphase, DEFAULT_CPHASE_DURATION);
        Calibration::calibrated(p, COUPLING, swap, cz, 0.9999).unwrap()
    })
}

fn labels(seq: &CompiledSequence) -> Vec<String> {
    seq.ops.iter().map(|o| o.primitive.label()).collect()
}

fn expansion_len(g: &LogicalGate) -> usize {
    match g {
        LogicalGate::Rot { .. } => 5,
        LogicalGate::Cphase { .. } => 7,
        LogicalGate::Measure { .. } | LogicalGate::Prepare { .. } => 3,
    }
}

#[test]
fn empty_circuit_compiles_to_nothing() {
    let seq = compile(&LogicalCircuit::new(3), &register(3), &ideal()).unwrap();
    assert!(seq.ops.is_empty());
    assert_eq!(seq.budget(&SystemParams::reference()).total_time, 0.0);
}

#[test]
fn expansions() {
    let reg = register(4);
    let rot = compile(&LogicalCircuit::new(4).rot(2, 0.0, PI), &reg, &ideal()).unwrap();
    let rot_ops: Vec<&Primitive> = rot.ops.iter().map(|o| &o.primitive).collect();
    assert!(matches!(
        rot_ops[..],
        [
            Primitive::Retrieve { mode: 2 },
            Primitive::Swap,
            Primitive::CpbRotation { .. },
            Primitive::Swap,
            Primitive::Store { mode: 2 }
        ]
    ));
    let cz = compile(&LogicalCircuit::new(4).cphase(3, 1), &reg, &ideal()).unwrap();
    let cz_ops: Vec<&Primitive> = cz.ops.iter().map(|o| &o.primitive).collect();
    assert!(matches!(
        cz_ops[..],
        [
            Primitive::Retrieve { mode: 1 },
            Primitive::Swap,
            Primitive::Retrieve { mode: 3 },
            Primitive::Cphase,
            Primitive::Store { mode: 3 },
            Primitive::Swap,
            Primitive::Store { mode: 1 }
        ]
    ));
    let m = compile(&LogicalCircuit::new(4).measure(0), &reg, &ideal()).unwrap();
    assert_eq!(labels(&m).len(), 3);
    assert!(matches!(m.ops[2].primitive, Primitive::Readout { qubit: 0 }));
}

#[test]
fn hundred_random_gates_on_hundred_qubits() {
    let reg = register(100);
    let c = LogicalCircuit::random(100, 100, 42).unwrap();
    let seq = compile(&c, &reg, &ideal()).unwrap();
    let expect: usize = c.gates.iter().map(expansion_len).sum();
    assert_eq!(seq.ops.len(), expect);
    let b = seq.budget(&SystemParams::reference());
    assert!(b.infidelity_multiplicative <= b.infidelity_additive + 1e-15);
    assert!(b.cpb_gate_time <= b.cpb_time && b.cpb_time <= b.total_time);
}

#[test]
fn compile_errors_name_the_gate() {
    let reg = register(3);
    let cases = [
        LogicalCircuit::new(3).cphase(1, 1),
        LogicalCircuit::new(3).rot(5, 0.0, 1.0),
        LogicalCircuit::new(3).measure(0).rot(0, 0.0, 1.0),
        LogicalCircuit::new(3).rot(0, 0.0, 1.0).prepare(0, C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
    ];
    for c in cases {
        match compile(&c, &reg, &ideal()) {
            Err(Error::Compile { gate, .. }) => assert!(!gate.is_empty()),
            other => panic!("expected compile error, got {other:?}"),
        }
    }
    assert!(compile(&LogicalCircuit::new(4), &reg, &ideal()).is_err());
}

#[test]
fn circuit_json_is_strict() {
    let c = LogicalCircuit::new(2).rot(0, 0.5, 1.0).cphase(0, 1).measure(1);
    let back = LogicalCircuit::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back, c);
    let bad = r#"{"n_qubits": 2, "gates": [{"gate": "rot", "qubit": 0, "axis_phase": 0, "angle": 1, "extra": 1}]}"#;
    assert!(LogicalCircuit::from_json(bad).is_err());
}

#[test]
fn bell_with_ideal_gates() {
    let reg = register(2);
    let cal = ideal();
    let c = bell_circuit();
    let seq = compile(&c, &reg, &cal).unwrap();
    let r = execute(&seq, &RegisterState::vacuum(reg), &cal, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let f = state_fidelity(&simulate_logical(&c).unwrap(), &logical_vector(&r.state, 2));
    assert!(f >= 0.999, "{f}");
}

#[test]
fn spectators_are_untouched() {
    let reg = register(5);
    let cal = ideal();
    let qubits: Vec<(usize, C64, C64)> = (0..5)
        .map(|j| {
            let t = 0.3 + 0.2 * j as f64;
            (j, C64::new(t.cos(), 0.0), C64::from_polar(t.sin(), 0.7 * j as f64))
        })
        .collect();
    let start = RegisterState::product(reg.clone(), &qubits).unwrap();
    let c = LogicalCircuit::new(5).rot(1, 0.2, 1.1).cphase(3, 1).rot(3, PI / 2.0, -0.4);
    let seq = compile(&c, &reg, &cal).unwrap();
    let r = execute(&seq, &start, &cal, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for j in [0, 2, 4] {
        let d = (r.state.reduced_qubit(j) - start.reduced_qubit(j)).norm();
        assert!(d <= 1e-9, "qubit {j}: {d}");
    }
}

#[test]
fn prepared_one_is_measured_as_one() {
    let reg = register(2);
    let cal = calibrated();
    let c = LogicalCircuit::new(2).prepare(0, C64::new(0.0, 0.0), C64::new(1.0, 0.0)).measure(0);
    let seq = compile(&c, &reg, cal).unwrap();
    let r = execute(&seq, &RegisterState::vacuum(reg), cal, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let m = &r.measurements[0];
    let p_one = m.probability_one * (1.0 - m.discrimination_error) + (1.0 - m.probability_one) * m.discrimination_error;
    assert!(p_one >= 0.99, "{p_one}");
}

#[test]
fn trace_csv_has_one_row_per_primitive() {
    let reg = register(2);
    let cal = ideal();
    let seq = compile(&bell_circuit(), &reg, &cal).unwrap();
    let r = execute(&seq, &RegisterState::vacuum(reg), &cal, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut buf = Vec::new();
    r.write_trace_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), seq.ops.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Outcome frequencies of prepare + measure follow |β|² folded with the
    /// readout error.
    #[test]
    fn born_statistics(theta in 0.2f64..2.9, phase in 0.0f64..std::f64::consts::TAU, seed in 0u64..1000) {
        let reg = register(1);
        let cal = ideal();
        let (a, b) = (C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phase));
        let seq = compile(&LogicalCircuit::new(1).prepare(0, a, b).measure(0), &reg, &cal).unwrap();
        let start = RegisterState::vacuum(reg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shots = 2000;
        let mut ones = 0usize;
        let mut eps = 0.0;
        for _ in 0..shots {
            let r = execute(&seq, &start, &cal, &mut rng).unwrap();
            eps = r.measurements[0].discrimination_error;
            ones += r.measurements[0].outcome as usize;
        }
        let p = b.norm_sqr() * (1.0 - eps) + a.norm_sqr() * eps;
        let sigma = (shots as f64 * p * (1.0 - p)).sqrt();
        prop_assert!((ones as f64 - shots as f64 * p).abs() <= 4.0 * sigma, "{ones} vs {}", shots as f64 * p);
    }
}
