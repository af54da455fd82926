//! Brute-force reference for the effective register: the same protocol run
//! molecule by molecule on the exact Fock basis.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::collective::{
    ModeOccupation, RegisterBasisState, RegisterState, StoredLevel, SwapDirection, TransferSettings,
};
use crate::dynamics::{propagate, DrivenHamiltonian, PropagationOptions};
use crate::error::{invalid, Result};
use crate::hilbert::{
    optical_terms, raman_terms, Basis, BasisConfig, BasisRef, BasisState, MolecularLevel, StateVector, SystemParams,
};
use crate::phasegeom::{angle_schedule, build_register, make_lattice, EnsembleGeometry, ModeRegister, WaveVector};
use crate::pulses::{stirap_schedule, Channel, StirapDirection, StirapSpec, STIRAP_WINDOW};

/// Samples per STIRAP schedule.
pub const STIRAP_SAMPLES: usize = 401;

/// Ensemble, register and exact basis used by the oracle.
#[derive(Clone, Debug)]
pub struct OracleSetup {
    pub geometry: EnsembleGeometry,
    pub register: Arc<ModeRegister>,
    pub basis: BasisRef,
    pub params: SystemParams,
    /// Pulse shape of every STIRAP (direction and k2 are set per step).
    pub stirap: StirapSpec,
    pub tolerance: f64,
}

impl OracleSetup {
    pub fn new(geometry: EnsembleGeometry, register: Arc<ModeRegister>, params: SystemParams) -> Result<Self> {
        params.validate()?;
        let cfg = BasisConfig::new(geometry.len(), 1, 2, false).with_levels(&[
            MolecularLevel::M,
            MolecularLevel::F,
            MolecularLevel::EEl,
        ]);
        let basis = Arc::new(Basis::new(cfg)?);
        let stirap = StirapSpec::standard(StirapDirection::Forward, register.k1(), register.k2(0));
        Ok(Self {
            geometry,
            register,
            basis,
            params,
            stirap,
            tolerance: 1e-8,
        })
    }

    /// Equidistant lattice of `n` molecules with `modes` orthogonal patterns
    /// (diffraction orders 1..=modes) at λ = 500 nm.
    pub fn lattice(n: usize, modes: usize, params: SystemParams) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("oracle needs at least one mode"));
        }
        let geom = make_lattice(n, 1e-3, [0.0, 0.0, 1.0])?;
        let lambda = 500e-9;
        let angles = angle_schedule(geom.pattern_length(), lambda, 1, modes as i64)?;
        let k1 = WaveVector::new(2.0 * std::f64::consts::PI / lambda, 0.0, 0.0);
        let reg = build_register(&geom, k1, &angles, 1e-9)?;
        Self::new(geom, Arc::new(reg), params)
    }

    pub fn collective_coupling(&self) -> Result<f64> {
        Ok((self.geometry.len() as f64).sqrt() * self.params.g_eff()?)
    }

    /// Unit-efficiency settings matching the exact Raman coupling.
    pub fn settings(&self) -> Result<TransferSettings> {
        Ok(TransferSettings::ideal(self.collective_coupling()?))
    }

    fn excited_diag(&self) -> Vec<f64> {
        self.basis.diagonal(|s| s.count_level(MolecularLevel::EEl) as f64)
    }
}

/// Maps an effective register state onto the exact basis. Each effective
/// basis state becomes the normalized symmetrized pattern state.
pub fn embed(state: &RegisterState, setup: &OracleSetup) -> Result<StateVector> {
    let basis = &setup.basis;
    let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
    for (s, a) in state.components() {
        if s.cpb_excited {
            return Err(invalid("oracle basis has no CPB"));
        }
        let v = embed_basis_state(s, setup)?;
        for (i, x) in v {
            amps[i] += a * x;
        }
    }
    let mut out = StateVector::from_amplitudes(basis, amps)?;
    out.normalize();
    Ok(out)
}

fn level_of(l: StoredLevel) -> MolecularLevel {
    match l {
        StoredLevel::M => MolecularLevel::M,
        StoredLevel::F => MolecularLevel::F,
    }
}

fn embed_basis_state(s: &RegisterBasisState, setup: &OracleSetup) -> Result<Vec<(usize, C64)>> {
    let mut start = BasisState::vacuum();
    start.cavity_photons = s.cavity_photon as usize;
    let mut partial: Vec<(BasisState, C64)> = vec![(start, C64::new(1.0, 0.0))];
    for ModeOccupation { level, momentum_offset, .. } in &s.occupations {
        let phases = setup.geometry.phases(&momentum_offset.vector(&setup.register));
        let mut next = Vec::new();
        for (bs, a) in &partial {
            for (j, ph) in phases.iter().enumerate() {
                if bs.level_of(j) != MolecularLevel::G {
                    continue;
                }
                next.push((bs.with_level(j, level_of(*level)), a * ph));
            }
        }
        partial = next;
    }
    let mut acc: std::collections::BTreeMap<usize, C64> = Default::default();
    for (bs, a) in partial {
        let i = setup
            .basis
            .index_of(&bs)
            .ok_or_else(|| invalid("effective state exceeds the oracle basis"))?;
        *acc.entry(i).or_default() += a;
    }
    let norm = acc.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(invalid("effective basis state has no exact counterpart"));
    }
    Ok(acc.into_iter().map(|(i, a)| (i, a / norm)).collect())
}

/// Adds a cavity qubit α|0⟩ + β|1⟩. Residual photon amplitude left by an
/// earlier transfer cannot hold a second photon in this basis and is
/// discarded, which lowers the norm.
pub fn load_cavity_exact(state: &StateVector, alpha: C64, beta: C64) -> Result<StateVector> {
    let basis = &state.basis;
    let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
    for (i, s) in basis.states().iter().enumerate() {
        let a = state.amplitudes[i];
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        if s.cavity_photons != 0 {
            continue;
        }
        amps[i] += a * alpha;
        let mut t = s.clone();
        t.cavity_photons = 1;
        let j = basis
            .index_of(&t)
            .ok_or_else(|| invalid("photon state exceeds the oracle basis"))?;
        amps[j] += a * beta;
    }
    StateVector::from_amplitudes(basis, amps)
}

/// Result of one exact step.
#[derive(Clone, Debug)]
pub struct ExactStep {
    pub state: StateVector,
    pub peak_excited: f64,
}

/// Exact STIRAP with the Stokes beam of mode `j`.
pub fn exact_stirap(state: &StateVector, setup: &OracleSetup, j: usize, direction: StirapDirection) -> Result<ExactStep> {
    if j >= setup.register.len() {
        return Err(invalid(format!("mode {j} outside register")));
    }
    let mut spec = setup.stirap.clone();
    spec.direction = direction;
    spec.k1 = setup.register.k1();
    spec.k2 = setup.register.k2(j);
    run_stirap(state, setup, &spec)
}

fn run_stirap(state: &StateVector, setup: &OracleSetup, spec: &StirapSpec) -> Result<ExactStep> {
    let sched = stirap_schedule(spec, 0.0, STIRAP_WINDOW, STIRAP_SAMPLES)?;
    let terms = optical_terms(&setup.geometry, &setup.basis, &spec.k1, &spec.k2)?;
    let ham = DrivenHamiltonian::new(setup.basis.len())
        .with_schedule(sched)
        .add_channel(terms.pump, Channel::Omega1, 1.0)?
        .add_channel(terms.stokes, Channel::Omega2, 1.0)?;
    let opts = PropagationOptions::default()
        .with_tolerance(setup.tolerance)
        .observe("excited", setup.excited_diag());
    let r = propagate(state, &ham, 0.0, STIRAP_WINDOW, &opts)?;
    let peak = r.trace("excited").map(|t| t.max()).unwrap_or(0.0);
    Ok(ExactStep {
        state: r.final_state,
        peak_excited: peak,
    })
}

/// Exact resonant Raman exchange for `duration`.
pub fn exact_cavity_swap(state: &StateVector, setup: &OracleSetup, duration: f64) -> Result<ExactStep> {
    let terms = raman_terms(&setup.geometry, &setup.basis)?;
    let g = setup.params.g_eff()?;
    let ham = DrivenHamiltonian::new(setup.basis.len()).add_constant(terms.exchange, g)?;
    let opts = PropagationOptions::default().with_tolerance(setup.tolerance);
    let r = propagate(state, &ham, 0.0, duration, &opts)?;
    Ok(ExactStep {
        state: r.final_state,
        peak_excited: 0.0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepComparison {
    pub label: String,
    /// |⟨exact|embedded effective⟩|².
    pub fidelity: f64,
    pub peak_excited: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkthroughComparison {
    pub n_molecules: usize,
    pub steps: Vec<StepComparison>,
    pub final_fidelity: f64,
    /// 1 − final fidelity.
    pub deviation: f64,
    pub peak_excited: f64,
}

/// Logical amplitudes of the two qubits used in the walkthrough.
#[derive(Clone, Copy, Debug)]
pub struct WalkthroughInputs {
    pub first: (C64, C64),
    pub second: (C64, C64),
}

impl Default for WalkthroughInputs {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            first: (C64::new(h, 0.0), C64::new(h, 0.0)),
            second: (C64::new(h, 0.0), C64::new(0.0, h)),
        }
    }
}

struct Walk<'a> {
    setup: &'a OracleSetup,
    settings: TransferSettings,
    eff: RegisterState,
    exact: StateVector,
    steps: Vec<StepComparison>,
}

impl Walk<'_> {
    fn record(&mut self, label: String, peak: f64) -> Result<()> {
        let e = embed(&self.eff, self.setup)?;
        let fid = self.exact.inner(&e).norm_sqr();
        self.steps.push(StepComparison {
            label,
            fidelity: fid,
            peak_excited: peak,
        });
        Ok(())
    }

    fn shift(&mut self, j: usize, back: bool) -> Result<()> {
        let dir = if back {
            StirapDirection::Inverted
        } else {
            StirapDirection::Forward
        };
        let st = exact_stirap(&self.exact, self.setup, j, dir)?;
        self.exact = st.state;
        self.eff = if back {
            self.eff.shift_back(j, 1.0)?
        } else {
            self.eff.shift_forward(j, 1.0)?
        };
        let name = if back { "shift_back" } else { "shift_forward" };
        self.record(format!("{name}({j})"), st.peak_excited)
    }

    fn swap(&mut self, dir: SwapDirection) -> Result<()> {
        let t = self.settings.pi_duration();
        self.exact = exact_cavity_swap(&self.exact, self.setup, t)?.state;
        self.eff = self.eff.cavity_mode_swap(dir, t, &self.settings)?;
        self.record(format!("cavity_swap({dir:?})").to_lowercase(), 0.0)
    }

    fn load(&mut self, (a, b): (C64, C64)) -> Result<()> {
        self.exact = load_cavity_exact(&self.exact, a, b)?;
        self.eff = self.eff.load_cavity(a, b)?;
        self.record("load_cavity".into(), 0.0)
    }
}

/// Stores two cavity qubits in modes 0 and 1, then retrieves mode 1, on both
/// the exact basis and the effective register. Frame corrections are virtual
/// and identical on both sides, so they are left out.
pub fn compare_walkthrough(setup: &OracleSetup, inputs: WalkthroughInputs) -> Result<WalkthroughComparison> {
    if setup.register.len() < 2 {
        return Err(invalid("walkthrough needs two modes"));
    }
    let eff = RegisterState::vacuum(setup.register.clone());
    let exact = embed(&eff, setup)?;
    let mut w = Walk {
        setup,
        settings: setup.settings()?,
        eff,
        exact,
        steps: Vec::new(),
    };
    w.load(inputs.first)?;
    for (j, next) in [(0usize, Some(inputs.second)), (1, None)] {
        w.shift(j, true)?;
        w.swap(SwapDirection::Store)?;
        w.shift(j, false)?;
        if let Some(q) = next {
            w.load(q)?;
        }
    }
    w.shift(1, true)?;
    w.swap(SwapDirection::Retrieve)?;
    w.shift(1, false)?;
    let final_fidelity = w.steps.last().map(|s| s.fidelity).unwrap_or(1.0);
    let peak = w.steps.iter().map(|s| s.peak_excited).fold(0.0, f64::max);
    Ok(WalkthroughComparison {
        n_molecules: setup.geometry.len(),
        final_fidelity,
        deviation: 1.0 - final_fidelity,
        peak_excited: peak,
        steps: w.steps,
    })
}

/// One cavity transfer with a spectator qubit in level m, started from the
/// embedded effective state so that earlier steps do not contribute.
/// Returns |⟨exact|effective⟩|² after the transfer.
pub fn compare_spectator_swap(setup: &OracleSetup, inputs: WalkthroughInputs, direction: SwapDirection) -> Result<f64> {
    if setup.register.len() < 2 {
        return Err(invalid("spectator comparison needs two modes"));
    }
    let settings = setup.settings()?;
    let t = settings.pi_duration();
    let mut eff = RegisterState::vacuum(setup.register.clone())
        .load_cavity(inputs.first.0, inputs.first.1)?
        .shift_back(0, 1.0)?
        .cavity_mode_swap(SwapDirection::Store, t, &settings)?
        .shift_forward(0, 1.0)?
        .load_cavity(inputs.second.0, inputs.second.1)?
        .shift_back(1, 1.0)?;
    if direction == SwapDirection::Retrieve {
        eff = eff
            .cavity_mode_swap(SwapDirection::Store, t, &settings)?
            .shift_forward(1, 1.0)?
            .shift_back(1, 1.0)?;
    }
    let exact = exact_cavity_swap(&embed(&eff, setup)?, setup, t)?.state;
    let eff = eff.cavity_mode_swap(direction, t, &settings)?;
    Ok(exact.inner(&embed(&eff, setup)?).norm_sqr())
}

#[derive(Clone, Debug, Serialize)]
pub struct NaiveReport {
    pub n_molecules: usize,
    /// Largest e_el population during the second store.
    pub peak_excited: f64,
    /// Population left in e_el after the second store.
    pub final_excited: f64,
    /// Fidelity with the intended two-qubit stored state.
    pub fidelity_to_target: f64,
}

/// Second store without the preceding shift_back: the spectator sits in f
/// when the forward STIRAP runs and is driven into e_el.
pub fn naive_walkthrough(setup: &OracleSetup, inputs: WalkthroughInputs) -> Result<NaiveReport> {
    if setup.register.len() < 2 {
        return Err(invalid("walkthrough needs two modes"));
    }
    let vac = embed(&RegisterState::vacuum(setup.register.clone()), setup)?;
    let mut x = load_cavity_exact(&vac, inputs.first.0, inputs.first.1)?;
    let mut peak = 0.0f64;
    // First store: the register is empty so the plain sequence is correct.
    x = exact_stirap(&x, setup, 0, StirapDirection::Inverted)?.state;
    let t = setup.settings()?.pi_duration();
    x = exact_cavity_swap(&x, setup, t)?.state;
    x = exact_stirap(&x, setup, 0, StirapDirection::Forward)?.state;
    x = load_cavity_exact(&x, inputs.second.0, inputs.second.1)?;
    x = exact_cavity_swap(&x, setup, t)?.state;
    let st = exact_stirap(&x, setup, 1, StirapDirection::Forward)?;
    peak = peak.max(st.peak_excited);
    x = st.state;
    let final_excited = x.expect_diag(&setup.excited_diag());

    let settings = setup.settings()?;
    let mut target = RegisterState::vacuum(setup.register.clone()).load_cavity(inputs.first.0, inputs.first.1)?;
    for (j, next) in [(0usize, Some(inputs.second)), (1, None)] {
        target = target
            .shift_back(j, 1.0)?
            .cavity_mode_swap(SwapDirection::Store, t, &settings)?
            .shift_forward(j, 1.0)?;
        if let Some((a, b)) = next {
            target = target.load_cavity(a, b)?;
        }
    }
    let fid = x.inner(&embed(&target, setup)?).norm_sqr();
    Ok(NaiveReport {
        n_molecules: setup.geometry.len(),
        peak_excited: peak,
        final_excited,
        fidelity_to_target: fid,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StirapReport {
    pub adiabaticity: f64,
    /// Population transferred m → f.
    pub efficiency: f64,
    pub peak_excited: f64,
    /// Population returned to m after the inverted pulse.
    pub return_fidelity: f64,
    pub return_peak_excited: f64,
}

/// Single-excitation dark-state transfer of the (m, 0) pattern into (f, q)
/// and back on an ensemble of `geometry`.
pub fn stirap_study(geometry: &EnsembleGeometry, spec: &StirapSpec, tolerance: f64) -> Result<StirapReport> {
    let cfg = BasisConfig::new(geometry.len(), 0, 1, false).with_levels(&[
        MolecularLevel::M,
        MolecularLevel::F,
        MolecularLevel::EEl,
    ]);
    let basis: BasisRef = Arc::new(Basis::new(cfg)?);
    let n = geometry.len();
    let pattern = |level: MolecularLevel, q: &WaveVector| -> Result<StateVector> {
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        for (j, ph) in geometry.phases(q).into_iter().enumerate() {
            let i = basis
                .index_of(&BasisState::vacuum().with_level(j, level))
                .ok_or_else(|| invalid("pattern state outside basis"))?;
            amps[i] = ph / (n as f64).sqrt();
        }
        StateVector::from_amplitudes(&basis, amps)
    };
    let q = spec.k1 - spec.k2;
    let m0 = pattern(MolecularLevel::M, &WaveVector::ZERO)?;
    let fq = pattern(MolecularLevel::F, &q)?;
    let excited = basis.diagonal(|s| s.count_level(MolecularLevel::EEl) as f64);
    let run = |state: &StateVector, spec: &StirapSpec| -> Result<(StateVector, f64)> {
        let sched = stirap_schedule(spec, 0.0, STIRAP_WINDOW, STIRAP_SAMPLES)?;
        let terms = optical_terms(geometry, &basis, &spec.k1, &spec.k2)?;
        let ham = DrivenHamiltonian::new(basis.len())
            .with_schedule(sched)
            .add_channel(terms.pump, Channel::Omega1, 1.0)?
            .add_channel(terms.stokes, Channel::Omega2, 1.0)?;
        let opts = PropagationOptions::default()
            .with_tolerance(tolerance)
            .observe("excited", excited.clone());
        let r = propagate(state, &ham, 0.0, STIRAP_WINDOW, &opts)?;
        let peak = r.trace("excited").map(|t| t.max()).unwrap_or(0.0);
        Ok((r.final_state, peak))
    };
    let mut fwd = spec.clone();
    fwd.direction = StirapDirection::Forward;
    let (after, peak) = run(&m0, &fwd)?;
    let (back, peak_back) = run(&after, &fwd.inverted())?;
    Ok(StirapReport {
        adiabaticity: spec.adiabaticity(),
        efficiency: fq.inner(&after).norm_sqr(),
        peak_excited: peak,
        return_fidelity: m0.inner(&back).norm_sqr(),
        return_peak_excited: peak_back,
    })
}
