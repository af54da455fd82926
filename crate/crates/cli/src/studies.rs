use std::f64::consts::PI;
use std::sync::Arc;

use holoreg::collective::{RegisterState, SwapDirection};
use holoreg::dynamics::collective_rabi_frequency;
use holoreg::gates::{run_cphase, run_swap, GateReport};
use holoreg::optctl::{default_initial, optimize_gate, GateTarget, OptimizerOptions};
use holoreg::oracle::*;
use holoreg::phasegeom::*;
use holoreg::protocol::*;
use holoreg::pulses::{stirap_schedule, sweep_schedule, StirapSpec, SweepSpec, STIRAP_WINDOW};
use holoreg::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::artifacts::{named_seed, Check, StudyOutput};
use crate::config::{self, CalibrationBlock, CalibrationMode, Device, OptimizerBlock, Target};

const AXIS: [f64; 3] = [0.0, 0.0, 1.0];
/// Wavelength of the register built for circuit studies.
const REGISTER_WAVELENGTH: f64 = 500e-9;

fn k1(lambda: f64) -> WaveVector {
    WaveVector::new(2.0 * PI / lambda, 0.0, 0.0)
}

struct Table {
    wr: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(header).map_err(csv_err)?;
        Ok(Self { wr })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        self.wr.write_record(cells.into_iter().collect::<Vec<_>>()).map_err(csv_err)
    }

    fn finish(self) -> Result<Vec<u8>> {
        self.wr.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(e.to_string())
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn orthogonality(o: &config::Orthogonality, seed: u64) -> Result<StudyOutput> {
    let geom = make_lattice(o.lattice_sites, o.trap_length_m, AXIS)?;
    let angles = angle_schedule(geom.pattern_length(), o.wavelength_m, o.order_min, o.order_max)?;
    let reg = ModeRegister::evaluate(&geom, k1(o.wavelength_m), &angles)?;
    let worst = reg.crosstalk_bound();

    let schedule = angle_schedule(o.trap_length_m, o.wavelength_m, o.order_min, o.order_max)?;
    let max_deg = schedule.iter().map(|a| a.abs().to_degrees()).fold(0.0, f64::max);

    let seeds: Vec<u64> = (0..o.random_trials)
        .map(|i| named_seed(seed, &format!("orthogonality.trial{i}")))
        .collect();
    let ns: Vec<f64> = o.random_sizes.iter().map(|&n| n as f64).collect();
    let medians = o
        .random_sizes
        .iter()
        .map(|&n| median_random_overlap(n, o.trap_length_m, o.wavelength_m, o.random_half_span, &seeds))
        .collect::<Result<Vec<f64>>>()?;
    let slope = log_log_slope(&ns, &medians);

    let mut scaling = Table::new(&["n_molecules", "median_overlap", "inverse_sqrt_n"])?;
    for (n, m) in ns.iter().zip(&medians) {
        scaling.row([n.to_string(), m.to_string(), (1.0 / n.sqrt()).to_string()])?;
    }
    let mut angle_rows = Table::new(&["order", "theta_rad", "theta_deg"])?;
    for (order, a) in (o.order_min..=o.order_max).zip(&schedule) {
        angle_rows.row([order.to_string(), a.to_string(), a.to_degrees().to_string()])?;
    }
    Ok(StudyOutput {
        checks: vec![
            Check::at_most("lattice_max_overlap", worst, o.lattice_overlap_max),
            Check::within(
                "random_overlap_slope",
                slope,
                o.slope_target - o.slope_tolerance,
                o.slope_target + o.slope_tolerance,
            ),
            Check::at_most("max_angle_deg", max_deg, o.angle_max_deg),
        ],
        results: json!({
            "lattice_modes": reg.len(),
            "lattice_max_overlap": worst,
            "worst_pair": reg.worst_pair().map(|(i, j, _)| [i, j]),
            "angles": schedule.len(),
            "max_angle_deg": max_deg,
            "random_sizes": o.random_sizes,
            "median_overlap": medians,
            "fitted_slope": slope,
        }),
        traces: vec![("scaling".into(), scaling.finish()?), ("angles".into(), angle_rows.finish()?)],
    })
}

pub fn enhancement(e: &config::Enhancement, device: &Device) -> Result<StudyOutput> {
    let p = device.params();
    let g = p.g_eff()?;
    let mut table = Table::new(&["n_molecules", "rabi_rad_per_s", "sqrt_n_g_eff_rad_per_s", "relative_error"])?;
    let mut omegas = Vec::new();
    let mut worst: f64 = 0.0;
    for &n in &e.sizes {
        let geom = make_lattice(n, e.trap_length_m, AXIS)?;
        let w = collective_rabi_frequency(&geom, &p, n)?;
        let expect = (n as f64).sqrt() * g;
        let err = (w / expect - 1.0).abs();
        worst = worst.max(err);
        omegas.push(w);
        table.row([n.to_string(), w.to_string(), expect.to_string(), err.to_string()])?;
    }
    let ns: Vec<f64> = e.sizes.iter().map(|&n| n as f64).collect();
    let slope = if ns.len() >= 2 { Some(log_log_slope(&ns, &omegas)) } else { None };
    Ok(StudyOutput {
        checks: vec![Check::at_most("max_relative_error", worst, e.relative_tolerance)],
        results: json!({
            "g_eff_rad_per_s": g,
            "sizes": e.sizes,
            "rabi_rad_per_s": omegas,
            "fitted_exponent": slope,
        }),
        traces: vec![("enhancement".into(), table.finish()?)],
    })
}

pub fn stirap(s: &config::Stirap, device: &Device) -> Result<StudyOutput> {
    let setup = OracleSetup::lattice(s.n_molecules, 2, device.params())?;
    let mut spec = StirapSpec {
        k1: setup.register.k1(),
        k2: setup.register.k2(0),
        ..setup.stirap.clone()
    };
    if let Some(v) = s.peak_rabi_rad_per_s {
        spec.peak_rabi = v;
    }
    if let Some(v) = s.pulse_width_s {
        spec.pulse_width = v;
    }
    if let Some(v) = s.pulse_delay_s {
        spec.pulse_delay = v;
    }
    let r = stirap_study(&setup.geometry, &spec, s.tolerance)?;
    let sched = stirap_schedule(&spec, 0.0, STIRAP_WINDOW, STIRAP_SAMPLES)?;
    Ok(StudyOutput {
        checks: vec![
            Check::at_least("adiabaticity", r.adiabaticity, s.adiabaticity_min),
            Check::at_least("efficiency", r.efficiency, s.efficiency_min),
            Check::at_most("peak_excited", r.peak_excited, s.peak_excited_max),
            Check::at_least("return_fidelity", r.return_fidelity, s.efficiency_min),
            Check::at_most("return_peak_excited", r.return_peak_excited, s.peak_excited_max),
        ],
        results: json!({
            "n_molecules": s.n_molecules,
            "window_s": STIRAP_WINDOW,
            "peak_rabi_rad_per_s": spec.peak_rabi,
            "pulse_width_s": spec.pulse_width,
            "pulse_delay_s": spec.pulse_delay,
            "report": r,
        }),
        traces: vec![("schedule".into(), to_bytes(|b| sched.write_csv(b))?)],
    })
}

pub fn multiplex(m: &config::Multiplex, device: &Device) -> Result<StudyOutput> {
    let inputs = WalkthroughInputs::default();
    let p = device.params();
    let setup = |n| OracleSetup::lattice(n, 2, p.clone());
    let (walks, naive, spectator) = std::thread::scope(|s| {
        let walks: Vec<_> = m
            .sizes
            .iter()
            .map(|&n| s.spawn(move || compare_walkthrough(&setup(n)?, inputs)))
            .collect();
        let naive = s.spawn(|| naive_walkthrough(&setup(m.spectator_size)?, inputs));
        let spectator = setup(m.spectator_size).and_then(|st| compare_spectator_swap(&st, inputs, SwapDirection::Store));
        let walks: Vec<Result<WalkthroughComparison>> =
            walks.into_iter().map(|h| h.join().expect("walkthrough thread")).collect();
        (walks, naive.join().expect("naive thread"), spectator)
    });
    let walks = walks.into_iter().collect::<Result<Vec<_>>>()?;
    let naive = naive?;
    let spectator = spectator?;

    let ns: Vec<f64> = walks.iter().map(|w| w.n_molecules as f64).collect();
    let devs: Vec<f64> = walks.iter().map(|w| w.deviation).collect();
    let slope = log_log_slope(&ns, &devs);
    // Largest N·deviation relative to the smallest ensemble: ≤ 1 for a c/N bound.
    let c = devs[0] * ns[0];
    let excess = ns.iter().zip(&devs).map(|(n, d)| n * d / c).fold(0.0, f64::max);

    let mut steps = Table::new(&["n_molecules", "step", "label", "fidelity", "peak_excited"])?;
    for w in &walks {
        for (i, st) in w.steps.iter().enumerate() {
            steps.row([
                w.n_molecules.to_string(),
                i.to_string(),
                st.label.clone(),
                st.fidelity.to_string(),
                st.peak_excited.to_string(),
            ])?;
        }
    }
    let mut dev = Table::new(&["n_molecules", "deviation", "final_fidelity", "peak_excited"])?;
    for w in &walks {
        dev.row([
            w.n_molecules.to_string(),
            w.deviation.to_string(),
            w.final_fidelity.to_string(),
            w.peak_excited.to_string(),
        ])?;
    }
    Ok(StudyOutput {
        checks: vec![
            Check::at_least("spectator_swap_fidelity", spectator, m.spectator_fidelity_min),
            Check::at_most("deviation_slope", slope, m.deviation_slope_max),
            Check::at_most("deviation_times_n_over_smallest", excess, 1.0 + 1e-9),
            Check::above("naive_peak_excited", naive.peak_excited, m.naive_excited_min),
        ],
        results: json!({
            "sizes": m.sizes,
            "deviation": devs,
            "deviation_slope": slope,
            "spectator_size": m.spectator_size,
            "spectator_swap_fidelity": spectator,
            "naive": naive,
        }),
        traces: vec![("walkthrough".into(), steps.finish()?), ("deviation".into(), dev.finish()?)],
    })
}

pub fn gates(g: &config::Gates, device: &Device) -> Result<StudyOutput> {
    let p = device.params();
    let swap_s = sweep_schedule(&SweepSpec::swap(g.swap_endpoint_ratio * p.g_c, g.swap_duration_s), p.g_c, g.samples)?;
    let swap = run_swap(&swap_s, &p)?;
    let cz_spec = SweepSpec::cphase(
        g.cphase_endpoint_ratio * p.g_c,
        g.cphase_closest_ratio * p.g_c,
        g.cphase_duration_s,
    );
    let cz_s = sweep_schedule(&cz_spec, p.g_c, g.samples)?;
    let cz = run_cphase(&cz_s, &p)?;
    let transfer = swap.population_transfer.unwrap_or(0.0);
    Ok(StudyOutput {
        checks: vec![Check::at_least("swap_population_transfer", transfer, g.swap_transfer_min)],
        results: json!({
            "swap": swap,
            "cphase": cz,
        }),
        traces: vec![
            ("swap_schedule".into(), to_bytes(|b| swap_s.write_csv(b))?),
            ("swap_operator".into(), to_bytes(|b| swap.write_operator_csv(b))?),
            ("cphase_schedule".into(), to_bytes(|b| cz_s.write_csv(b))?),
            ("cphase_operator".into(), to_bytes(|b| cz.write_operator_csv(b))?),
        ],
    })
}

fn gate_target(t: Target) -> GateTarget {
    match t {
        Target::Swap => GateTarget::Swap,
        Target::Cphase => GateTarget::Cphase,
    }
}

fn duration_for(o: &OptimizerBlock, t: Target) -> f64 {
    match t {
        Target::Swap => o.swap_duration_s,
        Target::Cphase => o.cphase_duration_s,
    }
}

pub fn optimize(o: &config::Optimize, target: Target, device: &Device, seed: u64) -> Result<StudyOutput> {
    let p = device.params();
    let run_seed = named_seed(seed, "optimize");
    let init = default_initial(gate_target(target), p.g_c, duration_for(&o.optimizer, target), o.optimizer.knots)?;
    let (record, best, report) = optimize_gate(
        &init,
        gate_target(target),
        &p,
        &OptimizerOptions::new(o.optimizer.evaluations, run_seed),
    )?;
    let mut checks = vec![Check::at_most("best_infidelity", report.infidelity(), o.infidelity_max)];
    if target == Target::Cphase {
        let phi = report.conditional_phase.unwrap_or(f64::NAN);
        checks.push(Check::at_most("conditional_phase_error_rad", (phi - PI).abs(), o.phase_tolerance_rad));
    }
    let mut history = Table::new(&["iteration", "best_objective"])?;
    for (i, v) in record.history.iter().enumerate() {
        history.row([i.to_string(), v.to_string()])?;
    }
    let schedule = best.render()?;
    Ok(StudyOutput {
        checks,
        results: json!({
            "target": target,
            "optimizer_seed": run_seed,
            "best_infidelity": report.infidelity(),
            "initial_objective": record.initial_objective,
            "best_objective": record.best_objective,
            "evaluations": record.evaluations,
            "stagnated": record.stagnated,
            "best_parameters": record.best_parameters,
            "report": report,
        }),
        traces: vec![
            ("history".into(), history.finish()?),
            ("schedule".into(), to_bytes(|b| schedule.write_csv(b))?),
            ("operator".into(), to_bytes(|b| report.write_operator_csv(b))?),
        ],
    })
}

/// Calibration for circuit studies plus a JSON account of how it was made.
fn calibration(c: &CalibrationBlock, device: &Device, seed: u64) -> Result<(Calibration, Value)> {
    let p = device.params();
    let cc = device.collective_coupling();
    match c.mode {
        CalibrationMode::Ideal => Ok((Calibration::ideal(p, cc)?, json!({ "mode": "ideal" }))),
        CalibrationMode::Optimized => {
            let run = |t: Target| -> Result<GateReport> {
                let init = default_initial(gate_target(t), p.g_c, duration_for(&c.optimizer, t), c.optimizer.knots)?;
                let opts = OptimizerOptions::new(c.optimizer.evaluations, named_seed(seed, &format!("calibration.{t:?}")));
                Ok(optimize_gate(&init, gate_target(t), &p, &opts)?.2)
            };
            let swap = run(Target::Swap)?;
            let cz = run(Target::Cphase)?;
            let setup = OracleSetup::lattice(c.stirap_molecules, 2, p.clone())?;
            let spec = StirapSpec {
                k1: setup.register.k1(),
                k2: setup.register.k2(0),
                ..setup.stirap.clone()
            };
            let st = stirap_study(&setup.geometry, &spec, 1e-9)?;
            let info = json!({
                "mode": "optimized",
                "swap_infidelity": swap.infidelity(),
                "cphase_infidelity": cz.infidelity(),
                "stirap_efficiency": st.efficiency,
            });
            Ok((Calibration::calibrated(p, cc, swap, cz, st.efficiency)?, info))
        }
    }
}

fn circuit_register(k: usize) -> Result<Arc<ModeRegister>> {
    let g = make_lattice(4 * k, 1e-3, AXIS)?;
    let angles = angle_schedule(g.pattern_length(), REGISTER_WAVELENGTH, 1, k as i64)?;
    Ok(Arc::new(build_register(&g, k1(REGISTER_WAVELENGTH), &angles, DEFAULT_CROSSTALK_TOL)?))
}

pub fn budget(b: &config::Budget, device: &Device, seed: u64) -> Result<StudyOutput> {
    let (cal, cal_info) = calibration(&b.calibration, device, seed)?;
    let reg = circuit_register(b.n_qubits)?;
    let circuit_seed = named_seed(seed, "budget.circuit");
    let circuit = LogicalCircuit::random(b.n_qubits, b.n_gates, circuit_seed)?;
    let seq = compile(&circuit, &reg, &cal)?;
    let rep = seq.budget(&cal.params);
    let search_seed = named_seed(seed, "budget.search");
    let max = |scope, limit| max_gates_within_budget(&cal, &reg, b.n_qubits, search_seed, scope, limit, b.max_gates_search);
    let total = max(BudgetScope::Total, rep.coherence_limit)?;
    let cpb = max(BudgetScope::CpbOccupied, rep.coherence_limit)?;
    let gates_only = max(BudgetScope::CpbGates, rep.coherence_limit)?;
    let total_t1 = max(BudgetScope::Total, cal.params.t1())?;

    let mut ops = Table::new(&[
        "step",
        "gate_index",
        "op",
        "t_start_s",
        "duration_s",
        "loss",
        "infidelity",
        "cpb_occupied",
    ])?;
    let mut t = 0.0;
    for (i, op) in seq.ops.iter().enumerate() {
        ops.row([
            i.to_string(),
            op.gate_index.to_string(),
            op.primitive.label(),
            t.to_string(),
            op.duration.to_string(),
            op.loss.to_string(),
            op.infidelity.to_string(),
            op.cpb_occupied.to_string(),
        ])?;
        t += op.duration;
    }
    Ok(StudyOutput {
        checks: vec![
            Check::at_most("total_time_over_coherence_limit", rep.coherence_ratio, 1.0),
            Check::at_least("gates_within_coherence_limit", total as f64, b.n_gates as f64),
        ],
        results: json!({
            "calibration": cal_info,
            "circuit_seed": circuit_seed,
            "budget": rep,
            "gates_within_budget": {
                "total": total,
                "cpb_occupied": cpb,
                "cpb_gates": gates_only,
                "total_against_t1": total_t1,
            },
        }),
        traces: vec![("operations".into(), ops.finish()?)],
    })
}

pub fn endtoend(e: &config::Endtoend, device: &Device, seed: u64) -> Result<StudyOutput> {
    let (cal, cal_info) = calibration(&e.calibration, device, seed)?;
    let reg = circuit_register(2)?;
    let bell = bell_circuit();
    let ideal = simulate_logical(&bell)?;
    let seq = compile(&bell, &reg, &cal)?;
    let vacuum = RegisterState::vacuum(reg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(named_seed(seed, "endtoend.state"));
    let run = execute(&seq, &vacuum, &cal, &mut rng)?;
    let fidelity = state_fidelity(&ideal, &logical_vector(&run.state, 2));

    let measured = compile(&bell.clone().measure(0).measure(1), &reg, &cal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(named_seed(seed, "endtoend.shots"));
    let mut counts = [0usize; 4];
    for _ in 0..e.shots {
        let r = execute(&measured, &vacuum, &cal, &mut rng)?;
        let idx = r.measurements.iter().fold(0, |acc, m| acc | ((m.outcome as usize) << m.qubit));
        counts[idx] += 1;
    }
    let parity = (counts[0] + counts[3]) as f64 / e.shots as f64;

    let mut table = Table::new(&["outcome", "count", "frequency", "ideal_probability"])?;
    for (i, c) in counts.iter().enumerate() {
        table.row([
            format!("{}{}", i & 1, (i >> 1) & 1),
            c.to_string(),
            (*c as f64 / e.shots as f64).to_string(),
            ideal[i].norm_sqr().to_string(),
        ])?;
    }
    Ok(StudyOutput {
        checks: vec![
            Check::at_least("bell_state_fidelity", fidelity, e.fidelity_min),
            Check::at_least("even_parity_fraction", parity, e.parity_min),
        ],
        results: json!({
            "calibration": cal_info,
            "bell_state_fidelity": fidelity,
            "shots": e.shots,
            "counts": { "00": counts[0], "10": counts[1], "01": counts[2], "11": counts[3] },
            "budget": run.budget,
            "warnings": run.warnings,
        }),
        traces: vec![
            ("sequence".into(), to_bytes(|b| run.write_trace_csv(b))?),
            ("counts".into(), table.finish()?),
        ],
    })
}

/// Device parameters for diagnostics.
pub fn params_json(device: &Device) -> Value {
    serde_json::to_value(device.params()).unwrap_or(Value::Null)
}
