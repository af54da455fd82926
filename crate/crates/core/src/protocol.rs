//! Logical circuits on the holographic register: compilation into transfer
//! and CPB primitives, execution on the effective register, and time, loss
//! and infidelity budgets.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collective::{RegisterState, TransferSettings};
use crate::error::{invalid, Error, Result};
use crate::gates::{
    complex_rows, cpb_rotation, cz_target, readout, swap_target, GateReport, ReadoutReport, RotationSpec,
    DEFAULT_PROBE_PHOTONS,
};
use crate::hilbert::{SystemParams, TWO_PI};
use crate::optctl::{DEFAULT_CPHASE_DURATION, DEFAULT_SWAP_DURATION};
use crate::phasegeom::ModeRegister;
use crate::pulses::STIRAP_WINDOW;

/// CPB idle detuning in units of g_c.
pub const IDLE_DETUNING_RATIO: f64 = 20.0;
/// Default readout probe length.
pub const DEFAULT_PROBE_DURATION: f64 = 30e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogicalGate {
    /// Loads α|0⟩ + β|1⟩ (normalized on use) into an unused or measured qubit.
    Prepare { qubit: usize, alpha: [f64; 2], beta: [f64; 2] },
    /// Rotation by `angle` about the equatorial axis at `axis_phase`.
    Rot { qubit: usize, axis_phase: f64, angle: f64 },
    Cphase { control: usize, target: usize },
    Measure { qubit: usize },
}

impl LogicalGate {
    pub fn name(&self) -> &'static str {
        match self {
            LogicalGate::Prepare { .. } => "prepare",
            LogicalGate::Rot { .. } => "rot",
            LogicalGate::Cphase { .. } => "cphase",
            LogicalGate::Measure { .. } => "measure",
        }
    }

    fn qubits(&self) -> Vec<usize> {
        match *self {
            LogicalGate::Prepare { qubit, .. } | LogicalGate::Rot { qubit, .. } | LogicalGate::Measure { qubit } => {
                vec![qubit]
            }
            LogicalGate::Cphase { control, target } => vec![control, target],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicalCircuit {
    pub n_qubits: usize,
    pub gates: Vec<LogicalGate>,
}

impl LogicalCircuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn push(mut self, g: LogicalGate) -> Self {
        self.gates.push(g);
        self
    }

    pub fn rot(self, qubit: usize, axis_phase: f64, angle: f64) -> Self {
        self.push(LogicalGate::Rot { qubit, axis_phase, angle })
    }

    pub fn cphase(self, control: usize, target: usize) -> Self {
        self.push(LogicalGate::Cphase { control, target })
    }

    pub fn measure(self, qubit: usize) -> Self {
        self.push(LogicalGate::Measure { qubit })
    }

    pub fn prepare(self, qubit: usize, alpha: C64, beta: C64) -> Self {
        self.push(LogicalGate::Prepare {
            qubit,
            alpha: [alpha.re, alpha.im],
            beta: [beta.re, beta.im],
        })
    }

    /// Rotations about x or y with random angles and cphases on random
    /// distinct pairs, in equal proportion.
    pub fn random(n_qubits: usize, n_gates: usize, seed: u64) -> Result<Self> {
        if n_qubits < 2 {
            return Err(invalid("random circuits need at least two qubits"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Self::new(n_qubits);
        for _ in 0..n_gates {
            c.gates.push(random_gate(n_qubits, &mut rng));
        }
        Ok(c)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn random_gate<R: Rng>(n_qubits: usize, rng: &mut R) -> LogicalGate {
    if rng.random::<bool>() {
        LogicalGate::Rot {
            qubit: rng.random_range(0..n_qubits),
            axis_phase: if rng.random::<bool>() { 0.0 } else { PI / 2.0 },
            angle: rng.random_range(-PI..PI),
        }
    } else {
        let a = rng.random_range(0..n_qubits);
        let mut b = rng.random_range(0..n_qubits - 1);
        if b >= a {
            b += 1;
        }
        LogicalGate::Cphase { control: a, target: b }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Primitive {
    Retrieve { mode: usize },
    Store { mode: usize },
    /// Calibrated cavity ↔ CPB SWAP (used in both directions).
    Swap,
    CpbRotation { axis_phase: f64, angle: f64 },
    Cphase,
    /// Dispersive readout of the CPB followed by a reset to g.
    Readout { qubit: usize },
}

impl Primitive {
    pub fn label(&self) -> String {
        match self {
            Primitive::Retrieve { mode } => format!("retrieve({mode})"),
            Primitive::Store { mode } => format!("store({mode})"),
            Primitive::Swap => "swap".into(),
            Primitive::CpbRotation { axis_phase, angle } => format!("rot({axis_phase:.6},{angle:.6})"),
            Primitive::Cphase => "cphase".into(),
            Primitive::Readout { qubit } => format!("readout({qubit})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledOp {
    pub gate_index: usize,
    pub primitive: Primitive,
    pub duration: f64,
    /// Loss estimate of this primitive.
    pub loss: f64,
    /// Infidelity estimate of this primitive.
    pub infidelity: f64,
    /// Logical information sits on the CPB during this primitive.
    pub cpb_occupied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledSequence {
    pub n_qubits: usize,
    pub logical_gates: usize,
    pub ops: Vec<CompiledOp>,
}

/// Gate reports and transfer settings the compiler and executor draw on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub params: SystemParams,
    pub transfer: TransferSettings,
    /// Duration of one STIRAP leg.
    pub stirap_duration: f64,
    pub swap: GateReport,
    pub cphase: GateReport,
    /// CPB detuning between gates and during rotations and readout.
    pub idle_detuning: f64,
    pub rotation_rabi: f64,
    /// Apply exact rotations instead of simulating the dressed drive.
    pub ideal_rotations: bool,
    pub probe_duration: f64,
    pub probe_photons: f64,
}

fn ideal_report(name: &str, target: DMatrix<C64>, duration: f64) -> GateReport {
    let rows = complex_rows(&target);
    GateReport {
        target: name.to_string(),
        target_operator: rows.clone(),
        achieved_operator: rows,
        frame: None,
        average_fidelity: 1.0,
        process_fidelity: 1.0,
        worst_case_infidelity: 0.0,
        leakage: 0.0,
        conditional_phase: None,
        population_transfer: None,
        duration,
        loss_estimate: 0.0,
        warnings: Vec::new(),
    }
}

fn dmatrix4(m: &Matrix4<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |r, c| m[(r, c)])
}

impl Calibration {
    /// Exact gates, unit efficiencies and the default durations.
    pub fn ideal(params: SystemParams, collective_coupling: f64) -> Result<Self> {
        params.validate()?;
        if !(collective_coupling > 0.0) {
            return Err(invalid("collective coupling must be positive"));
        }
        Ok(Self {
            transfer: TransferSettings::ideal(collective_coupling),
            stirap_duration: STIRAP_WINDOW,
            swap: ideal_report("swap", dmatrix4(&swap_target()), DEFAULT_SWAP_DURATION),
            cphase: ideal_report("cphase", dmatrix4(&cz_target()), DEFAULT_CPHASE_DURATION),
            idle_detuning: IDLE_DETUNING_RATIO * params.g_c,
            rotation_rabi: TWO_PI * 100e6,
            ideal_rotations: true,
            probe_duration: DEFAULT_PROBE_DURATION,
            probe_photons: DEFAULT_PROBE_PHOTONS,
            params,
        })
    }

    /// Simulated gates and measured transfer efficiencies.
    pub fn calibrated(
        params: SystemParams,
        collective_coupling: f64,
        swap: GateReport,
        cphase: GateReport,
        stirap_efficiency: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&stirap_efficiency) {
            return Err(invalid("stirap efficiency outside [0, 1]"));
        }
        for r in [&swap, &cphase] {
            if r.achieved().shape() != (4, 4) {
                return Err(invalid(format!("gate report `{}` is not a two-qubit operator", r.target)));
            }
        }
        let mut c = Self::ideal(params, collective_coupling)?;
        c.transfer.stirap_efficiency = stirap_efficiency;
        c.swap = swap;
        c.cphase = cphase;
        c.ideal_rotations = false;
        Ok(c)
    }

    fn rotation_spec(&self, axis_phase: f64, angle: f64) -> RotationSpec {
        RotationSpec {
            axis_phase,
            angle,
            rabi: self.rotation_rabi,
            delta_cpb: self.idle_detuning,
        }
    }

    pub fn rotation(&self, axis_phase: f64, angle: f64) -> Result<GateReport> {
        let spec = self.rotation_spec(axis_phase, angle);
        if self.ideal_rotations {
            Ok(ideal_report("rot", spec.ideal(), spec.duration()))
        } else {
            cpb_rotation(&spec, &self.params)
        }
    }

    pub fn transfer_duration(&self) -> f64 {
        2.0 * self.stirap_duration + self.transfer.pi_duration()
    }

    /// Population lost by one store or retrieve.
    pub fn transfer_infidelity(&self) -> f64 {
        let e = self.transfer.stirap_efficiency;
        1.0 - e * e * self.transfer.swap_efficiency
    }

    /// κ∫⟨c†c⟩dt averaged over the two logical inputs.
    pub fn transfer_loss(&self) -> f64 {
        0.25 * self.params.kappa * self.transfer.pi_duration()
    }

    fn primitive_cost(&self, p: &Primitive) -> Result<(f64, f64, f64)> {
        Ok(match p {
            Primitive::Retrieve { .. } | Primitive::Store { .. } => {
                (self.transfer_duration(), self.transfer_loss(), self.transfer_infidelity())
            }
            Primitive::Swap => (self.swap.duration, self.swap.loss_estimate, self.swap.infidelity()),
            Primitive::Cphase => (self.cphase.duration, self.cphase.loss_estimate, self.cphase.infidelity()),
            Primitive::CpbRotation { axis_phase, angle } => {
                let r = self.rotation(*axis_phase, *angle)?;
                (r.duration, r.loss_estimate, r.infidelity())
            }
            Primitive::Readout { .. } => (self.probe_duration, 0.0, 0.0),
        })
    }
}

/// Where a logical qubit currently lives during compilation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Location {
    Stored,
    Cavity,
    Cpb,
    Measured,
}

struct Tracker {
    loc: Vec<Location>,
    cavity: Option<usize>,
    cpb: Option<usize>,
}

impl Tracker {
    fn fail(gate_index: usize, gate: &LogicalGate, reason: impl Into<String>) -> Error {
        Error::Compile {
            index: gate_index,
            gate: gate.name().to_string(),
            reason: reason.into(),
        }
    }

    /// Applies the occupancy bookkeeping of one primitive.
    fn step(&mut self, p: &Primitive, idx: usize, gate: &LogicalGate) -> Result<()> {
        match *p {
            Primitive::Retrieve { mode } => {
                if self.cavity.is_some() {
                    return Err(Self::fail(idx, gate, format!("retrieve({mode}) while the cavity is occupied")));
                }
                if self.loc[mode] != Location::Stored {
                    return Err(Self::fail(idx, gate, format!("qubit {mode} is not in the register")));
                }
                self.loc[mode] = Location::Cavity;
                self.cavity = Some(mode);
            }
            Primitive::Store { mode } => {
                if self.cavity != Some(mode) {
                    return Err(Self::fail(idx, gate, format!("store({mode}) but the cavity does not hold it")));
                }
                self.loc[mode] = Location::Stored;
                self.cavity = None;
            }
            Primitive::Swap => {
                let (cav, cpb) = (self.cavity, self.cpb);
                if let Some(q) = cav {
                    self.loc[q] = Location::Cpb;
                }
                if let Some(q) = cpb {
                    self.loc[q] = Location::Cavity;
                }
                self.cavity = cpb;
                self.cpb = cav;
            }
            Primitive::CpbRotation { .. } => {
                if self.cavity.is_some() {
                    return Err(Self::fail(idx, gate, "CPB rotation needs an empty cavity"));
                }
            }
            Primitive::Cphase => {
                if self.cavity.is_none() || self.cpb.is_none() {
                    return Err(Self::fail(idx, gate, "cphase needs one qubit on the CPB and one in the cavity"));
                }
            }
            Primitive::Readout { qubit } => {
                if self.cpb != Some(qubit) {
                    return Err(Self::fail(idx, gate, format!("readout of qubit {qubit} which is not on the CPB")));
                }
                if self.cavity.is_some() {
                    return Err(Self::fail(idx, gate, "readout needs an empty cavity"));
                }
                self.loc[qubit] = Location::Measured;
                self.cpb = None;
            }
        }
        Ok(())
    }

    fn idle(&self) -> bool {
        self.cavity.is_none() && self.cpb.is_none()
    }
}

/// Angle and axis phase of the rotation taking |g⟩ to α|g⟩ + β|e⟩ up to a
/// global phase.
pub fn preparation_rotation(alpha: C64, beta: C64) -> Result<(f64, f64)> {
    let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("prepared state must be non-zero and finite"));
    }
    let (a, b) = (alpha / n, beta / n);
    let angle = 2.0 * a.norm().clamp(0.0, 1.0).acos();
    // R|g⟩ = cos(θ/2)|g⟩ − i e^{iφ} sin(θ/2)|e⟩.
    let phase = if b.norm() > 0.0 { b.arg() - a.arg() + PI / 2.0 } else { 0.0 };
    Ok((phase, angle))
}

fn expand(gate: &LogicalGate) -> Result<Vec<Primitive>> {
    use Primitive::*;
    Ok(match *gate {
        LogicalGate::Prepare { qubit, alpha, beta } => {
            let (axis_phase, angle) =
                preparation_rotation(C64::new(alpha[0], alpha[1]), C64::new(beta[0], beta[1]))?;
            vec![CpbRotation { axis_phase, angle }, Swap, Store { mode: qubit }]
        }
        LogicalGate::Rot { qubit, axis_phase, angle } => vec![
            Retrieve { mode: qubit },
            Swap,
            CpbRotation { axis_phase, angle },
            Swap,
            Store { mode: qubit },
        ],
        LogicalGate::Cphase { control, target } => {
            let (i, j) = (control.min(target), control.max(target));
            vec![
                Retrieve { mode: i },
                Swap,
                Retrieve { mode: j },
                Cphase,
                Store { mode: j },
                Swap,
                Store { mode: i },
            ]
        }
        LogicalGate::Measure { qubit } => vec![Retrieve { mode: qubit }, Swap, Readout { qubit }],
    })
}

/// Expands every logical gate into primitives and checks the cavity and CPB
/// occupancy rules along the way.
pub fn compile(circuit: &LogicalCircuit, register: &ModeRegister, cal: &Calibration) -> Result<CompiledSequence> {
    if circuit.n_qubits > register.len() {
        return Err(invalid(format!(
            "circuit uses {} qubits but the register has {} modes",
            circuit.n_qubits,
            register.len()
        )));
    }
    let mut t = Tracker {
        loc: vec![Location::Stored; circuit.n_qubits],
        cavity: None,
        cpb: None,
    };
    // Qubits that have never been touched hold |0⟩ and may be prepared.
    let mut fresh = vec![true; circuit.n_qubits];
    let mut ops = Vec::new();
    for (idx, gate) in circuit.gates.iter().enumerate() {
        let qs = gate.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= circuit.n_qubits) {
            return Err(Tracker::fail(idx, gate, format!("qubit {q} outside circuit of {}", circuit.n_qubits)));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Tracker::fail(idx, gate, "cphase needs two distinct qubits"));
        }
        match gate {
            LogicalGate::Prepare { qubit, .. } => {
                let q = *qubit;
                if !(fresh[q] || t.loc[q] == Location::Measured) {
                    return Err(Tracker::fail(idx, gate, format!("qubit {q} is in use; measure it first")));
                }
            }
            _ => {
                if let Some(&q) = qs.iter().find(|&&q| t.loc[q] == Location::Measured) {
                    return Err(Tracker::fail(idx, gate, format!("qubit {q} was measured; prepare it first")));
                }
            }
        }
        for &q in &qs {
            fresh[q] = false;
        }
        for p in expand(gate)? {
            let before = t.cpb.is_some();
            t.step(&p, idx, gate)?;
            if let (LogicalGate::Prepare { qubit, .. }, Primitive::CpbRotation { .. }) = (gate, &p) {
                // The rotation writes the new qubit onto the idle CPB.
                t.loc[*qubit] = Location::Cpb;
                t.cpb = Some(*qubit);
            }
            let (duration, loss, infidelity) = cal.primitive_cost(&p)?;
            ops.push(CompiledOp {
                gate_index: idx,
                primitive: p,
                duration,
                loss,
                infidelity,
                cpb_occupied: before || t.cpb.is_some(),
            });
        }
        if !t.idle() {
            return Err(Tracker::fail(idx, gate, "expansion leaves the cavity or CPB occupied"));
        }
    }
    Ok(CompiledSequence {
        n_qubits: circuit.n_qubits,
        logical_gates: circuit.gates.len(),
        ops,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub total_time: f64,
    /// Time during which logical information sits on the CPB.
    pub cpb_time: f64,
    /// Time spent in CPB gates and readout only.
    pub cpb_gate_time: f64,
    pub loss: f64,
    /// Σ ε over primitives.
    pub infidelity_additive: f64,
    /// 1 − Π(1 − ε) over primitives.
    pub infidelity_multiplicative: f64,
    /// γ_φ times the CPB occupation time.
    pub dephasing: f64,
    pub operations: usize,
    pub logical_gates: usize,
    pub coherence_limit: f64,
    /// total_time / min(T₁, T₂).
    pub coherence_ratio: f64,
    /// cpb_time / min(T₁, T₂).
    pub cpb_coherence_ratio: f64,
}

pub fn coherence_limit(params: &SystemParams) -> f64 {
    params.t1().min(params.t2())
}

impl CompiledSequence {
    pub fn budget(&self, params: &SystemParams) -> BudgetReport {
        let mut b = BudgetReport {
            operations: self.ops.len(),
            logical_gates: self.logical_gates,
            coherence_limit: coherence_limit(params),
            ..Default::default()
        };
        let mut keep = 1.0;
        for op in &self.ops {
            b.total_time += op.duration;
            if op.cpb_occupied {
                b.cpb_time += op.duration;
            }
            if !matches!(op.primitive, Primitive::Retrieve { .. } | Primitive::Store { .. }) {
                b.cpb_gate_time += op.duration;
            }
            b.loss += op.loss;
            b.infidelity_additive += op.infidelity;
            keep *= 1.0 - op.infidelity;
        }
        b.infidelity_multiplicative = 1.0 - keep;
        b.dephasing = params.gamma_phi * b.cpb_time;
        b.coherence_ratio = b.total_time / b.coherence_limit;
        b.cpb_coherence_ratio = b.cpb_time / b.coherence_limit;
        b
    }
}

/// Which part of the compiled time is charged against the coherence limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetScope {
    /// The whole physical sequence.
    Total,
    /// Only while logical information sits on the CPB.
    CpbOccupied,
    /// Only CPB gates and readout.
    CpbGates,
}

impl BudgetReport {
    pub fn charged_time(&self, scope: BudgetScope) -> f64 {
        match scope {
            BudgetScope::Total => self.total_time,
            BudgetScope::CpbOccupied => self.cpb_time,
            BudgetScope::CpbGates => self.cpb_gate_time,
        }
    }
}

/// Largest number of random logical gates whose charged time stays below
/// `limit_time`, searching up to `max_gates`.
pub fn max_gates_within_budget(
    cal: &Calibration,
    register: &ModeRegister,
    n_qubits: usize,
    seed: u64,
    scope: BudgetScope,
    limit_time: f64,
    max_gates: usize,
) -> Result<usize> {
    if !(limit_time > 0.0) {
        return Err(invalid("time limit must be positive"));
    }
    if n_qubits < 2 {
        return Err(invalid("random circuits need at least two qubits"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = 0.0;
    for count in 0..max_gates {
        let c = LogicalCircuit::new(n_qubits).push(random_gate(n_qubits, &mut rng));
        used += compile(&c, register, cal)?.budget(&cal.params).charged_time(scope);
        if used >= limit_time {
            return Ok(count);
        }
    }
    Ok(max_gates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub gate_index: usize,
    pub qubit: usize,
    /// True for logical 1.
    pub outcome: bool,
    pub probability_one: f64,
    pub discrimination_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub gate_index: usize,
    pub op: String,
    pub t_start: f64,
    pub duration: f64,
    pub norm: f64,
    pub cumulative_infidelity: f64,
}

#[derive(Clone, Debug)]
pub struct ExecutionResult {
    pub state: RegisterState,
    pub budget: BudgetReport,
    pub measurements: Vec<MeasurementRecord>,
    pub readouts: Vec<ReadoutReport>,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

impl ExecutionResult {
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.trace {
            wr.serialize(row).map_err(|e| invalid(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn matrix4(m: &DMatrix<C64>) -> Result<Matrix4<C64>> {
    if m.shape() != (4, 4) {
        return Err(invalid("expected a 4×4 operator"));
    }
    Ok(Matrix4::from_fn(|r, c| m[(r, c)]))
}

fn matrix2(m: &DMatrix<C64>) -> Result<Matrix2<C64>> {
    if m.shape() != (2, 2) {
        return Err(invalid("expected a 2×2 operator"));
    }
    Ok(Matrix2::from_fn(|r, c| m[(r, c)]))
}

/// Runs a compiled sequence on the effective register. Readout outcomes are
/// drawn from `rng`.
pub fn execute<R: Rng + ?Sized>(
    seq: &CompiledSequence,
    initial: &RegisterState,
    cal: &Calibration,
    rng: &mut R,
) -> Result<ExecutionResult> {
    let swap = matrix4(&cal.swap.corrected())?;
    let cz = matrix4(&cal.cphase.corrected())?;
    let mut state = initial.clone();
    let mut measurements = Vec::new();
    let mut readouts = Vec::new();
    let mut trace = Vec::with_capacity(seq.ops.len());
    let mut warnings = Vec::new();
    let mut t = 0.0;
    let mut keep = 1.0;
    for (step, op) in seq.ops.iter().enumerate() {
        state = match &op.primitive {
            Primitive::Retrieve { mode } => state.retrieve_qubit(*mode, &cal.transfer)?,
            Primitive::Store { mode } => state.store_qubit(*mode, &cal.transfer)?,
            Primitive::Swap => state.apply_cavity_cpb(&swap, "swap")?,
            Primitive::Cphase => state.apply_cavity_cpb(&cz, "cphase")?,
            Primitive::CpbRotation { axis_phase, angle } => {
                let r = cal.rotation(*axis_phase, *angle)?;
                warnings.extend(r.warnings.iter().cloned());
                state.apply_cpb(&matrix2(&r.achieved())?, &op.primitive.label())?
            }
            Primitive::Readout { qubit } => {
                let p = state.probability_cpb_excited();
                let rep = readout(p, &cal.params, cal.idle_detuning, cal.probe_duration, cal.probe_photons)?;
                let (outcome, projected) = rep.sample(rng);
                warnings.extend(rep.warnings.iter().cloned());
                measurements.push(MeasurementRecord {
                    gate_index: op.gate_index,
                    qubit: *qubit,
                    outcome,
                    probability_one: p,
                    discrimination_error: rep.discrimination_error,
                });
                readouts.push(rep);
                if projected && p <= 0.0 || !projected && p >= 1.0 {
                    state
                } else {
                    state.project_cpb(projected)?
                }
                .reset_cpb()
            }
        };
        keep *= 1.0 - op.infidelity;
        trace.push(TraceRow {
            step,
            gate_index: op.gate_index,
            op: op.primitive.label(),
            t_start: t,
            duration: op.duration,
            norm: state.norm_sqr().sqrt(),
            cumulative_infidelity: 1.0 - keep,
        });
        t += op.duration;
    }
    warnings.extend(state.warnings.iter().cloned());
    warnings.dedup();
    Ok(ExecutionResult {
        budget: seq.budget(&cal.params),
        state,
        measurements,
        readouts,
        trace,
        warnings,
    })
}

/// Dense reference simulation of the logical circuit with exact gates,
/// skipping measurements. Index bit q (LSB first) is qubit q.
pub fn simulate_logical(circuit: &LogicalCircuit) -> Result<Vec<C64>> {
    let n = circuit.n_qubits;
    if n > 20 {
        return Err(invalid("dense reference limited to 20 qubits"));
    }
    let dim = 1usize << n;
    let mut psi = vec![C64::new(0.0, 0.0); dim];
    psi[0] = C64::new(1.0, 0.0);
    let apply1 = |psi: &mut Vec<C64>, q: usize, u: &DMatrix<C64>| {
        for i in 0..dim {
            if i & (1 << q) == 0 {
                let j = i | (1 << q);
                let (a, b) = (psi[i], psi[j]);
                psi[i] = u[(0, 0)] * a + u[(0, 1)] * b;
                psi[j] = u[(1, 0)] * a + u[(1, 1)] * b;
            }
        }
    };
    for g in &circuit.gates {
        match *g {
            LogicalGate::Prepare { qubit, alpha, beta } => {
                let (phase, angle) = preparation_rotation(C64::new(alpha[0], alpha[1]), C64::new(beta[0], beta[1]))?;
                let u = RotationSpec { axis_phase: phase, angle, rabi: 1.0, delta_cpb: 0.0 }.ideal();
                apply1(&mut psi, qubit, &u);
            }
            LogicalGate::Rot { qubit, axis_phase, angle } => {
                let u = RotationSpec { axis_phase, angle, rabi: 1.0, delta_cpb: 0.0 }.ideal();
                apply1(&mut psi, qubit, &u);
            }
            LogicalGate::Cphase { control, target } => {
                for (i, a) in psi.iter_mut().enumerate() {
                    if i & (1 << control) != 0 && i & (1 << target) != 0 {
                        *a = -*a;
                    }
                }
            }
            LogicalGate::Measure { .. } => {}
        }
    }
    Ok(psi)
}

/// Logical amplitudes of the first `n_qubits` modes in the dense ordering of
/// [`simulate_logical`].
pub fn logical_vector(state: &RegisterState, n_qubits: usize) -> Vec<C64> {
    let modes: Vec<usize> = (0..n_qubits).collect();
    let mut v = vec![C64::new(0.0, 0.0); 1 << n_qubits];
    for (bits, a) in state.logical_amplitudes(&modes) {
        let idx = bits.iter().enumerate().fold(0, |acc, (q, &b)| acc | ((b as usize) << q));
        v[idx] += a;
    }
    v
}

/// |⟨ideal|actual⟩|² with the actual state left unnormalized, so lost
/// population counts as error.
pub fn state_fidelity(ideal: &[C64], actual: &[C64]) -> f64 {
    let n: f64 = ideal.iter().map(|a| a.norm_sqr()).sum();
    let ov: C64 = ideal.iter().zip(actual).map(|(a, b)| a.conj() * b).sum();
    ov.norm_sqr() / n
}

/// Bell preparation: y rotations on both qubits, cphase, y rotation on the
/// second qubit.
pub fn bell_circuit() -> LogicalCircuit {
    LogicalCircuit::new(2)
        .rot(0, PI / 2.0, PI / 2.0)
        .rot(1, PI / 2.0, PI / 2.0)
        .cphase(0, 1)
        .rot(1, PI / 2.0, -PI / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preparation_angles_reproduce_state() {
        let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, -0.8));
        let (phase, angle) = preparation_rotation(a, b).unwrap();
        let u = RotationSpec { axis_phase: phase, angle, rabi: 1.0, delta_cpb: 0.0 }.ideal();
        let out = [u[(0, 0)], u[(1, 0)]];
        let ov = a.conj() * out[0] + b.conj() * out[1];
        assert!((ov.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_reference_is_maximally_entangled() {
        let v = simulate_logical(&bell_circuit()).unwrap();
        // |ψ00 ψ11 − ψ01 ψ10| = 1/2 for a maximally entangled pure state.
        let c = (v[0] * v[3] - v[1] * v[2]).norm();
        assert!((c - 0.5).abs() < 1e-12);
    }
}
