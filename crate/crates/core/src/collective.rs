//! Effective-mode register: every stored phase pattern is a hard-core
//! excitation labelled by its mode and by the symbolic wave vector it
//! currently carries.
//!
//! Phase conventions follow the physical primitives: each STIRAP leg
//! multiplies a transferred excitation by −1 (dark-state sign) and a resonant
//! cavity π-transfer by −i. `store_qubit` and `retrieve_qubit` undo the net
//! phase with a virtual frame correction so that store∘retrieve is the
//! identity.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phasegeom::{ModeRegister, WaveVector};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
/// Components below this probability are dropped.
const PRUNE: f64 = 1e-30;
/// Largest residual photon population a retrieve may discard.
pub const RESIDUAL_PHOTON_LIMIT: f64 = 1e-3;

/// Integer combination Σ c_i q_i of register wave vectors.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Momentum(BTreeMap<usize, i32>);

impl Momentum {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn mode(i: usize) -> Self {
        Self(BTreeMap::from([(i, 1)]))
    }

    pub fn add(&self, i: usize, c: i32) -> Self {
        let mut m = self.0.clone();
        let e = m.entry(i).or_insert(0);
        *e += c;
        if *e == 0 {
            m.remove(&i);
        }
        Self(m)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coefficients(&self) -> &BTreeMap<usize, i32> {
        &self.0
    }

    pub fn vector(&self, reg: &ModeRegister) -> WaveVector {
        self.0
            .iter()
            .fold(WaveVector::ZERO, |acc, (&i, &c)| acc + reg.mode(i) * c as f64)
    }

    /// (a, b) when the label is q_a − q_b.
    pub fn as_difference(&self) -> Option<(usize, usize)> {
        let mut plus = None;
        let mut minus = None;
        for (&i, &c) in &self.0 {
            match c {
                1 if plus.is_none() => plus = Some(i),
                -1 if minus.is_none() => minus = Some(i),
                _ => return None,
            }
        }
        match (plus, minus, self.0.len()) {
            (Some(a), Some(b), 2) => Some((a, b)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoredLevel {
    #[serde(rename = "m")]
    M,
    #[serde(rename = "f")]
    F,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeOccupation {
    pub mode_index: usize,
    pub level: StoredLevel,
    pub momentum_offset: Momentum,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegisterBasisState {
    pub cavity_photon: bool,
    pub cpb_excited: bool,
    /// Sorted by mode index; at most one entry per mode.
    pub occupations: Vec<ModeOccupation>,
}

impl RegisterBasisState {
    pub fn occupation(&self, mode: usize) -> Option<&ModeOccupation> {
        self.occupations.iter().find(|o| o.mode_index == mode)
    }

    fn insert(&mut self, occ: ModeOccupation) -> Result<()> {
        if self.occupation(occ.mode_index).is_some() {
            return Err(Error::Sequencing(format!(
                "mode {} already holds an excitation",
                occ.mode_index
            )));
        }
        let pos = self.occupations.partition_point(|o| o.mode_index < occ.mode_index);
        self.occupations.insert(pos, occ);
        Ok(())
    }

    fn remove(&mut self, mode: usize) -> Option<ModeOccupation> {
        let pos = self.occupations.iter().position(|o| o.mode_index == mode)?;
        Some(self.occupations.remove(pos))
    }

    fn zero_momentum_m(&self) -> Option<usize> {
        self.occupations
            .iter()
            .find(|o| o.level == StoredLevel::M && o.momentum_offset.is_zero())
            .map(|o| o.mode_index)
    }

    pub fn is_hard_core(&self) -> bool {
        self.occupations.windows(2).all(|w| w[0].mode_index < w[1].mode_index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapDirection {
    Store,
    Retrieve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RegisterEvent {
    ShiftBack { mode: usize, efficiency: f64 },
    ShiftForward { mode: usize, efficiency: f64 },
    CavitySwap { direction: SwapDirection, mode: usize, angle: f64, efficiency: f64, leakage: f64 },
    FrameCorrection { mode: usize, phase: f64 },
    CavityCpb { label: String },
    Cpb { label: String },
    ProjectCpb { excited: bool, probability: f64 },
}

/// Transfer settings shared by the store and retrieve composites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub stirap_efficiency: f64,
    pub swap_efficiency: f64,
    /// √N₀·g_eff (rad/s).
    pub collective_coupling: f64,
    /// Spectator leakage above which a warning is recorded.
    pub leakage_bound: f64,
}

impl TransferSettings {
    pub fn ideal(collective_coupling: f64) -> Self {
        Self {
            stirap_efficiency: 1.0,
            swap_efficiency: 1.0,
            collective_coupling,
            leakage_bound: 1e-2,
        }
    }

    /// Duration of a full cavity ↔ |m,0⟩ transfer.
    pub fn pi_duration(&self) -> f64 {
        FRAC_PI_2 / self.collective_coupling
    }
}

#[derive(Clone, Debug)]
pub struct RegisterState {
    register: Arc<ModeRegister>,
    amplitudes: BTreeMap<RegisterBasisState, C64>,
    shift_context: Option<usize>,
    /// Accumulated spectator overlap error from cavity transfers.
    pub transfer_leakage: f64,
    pub warnings: Vec<String>,
    pub events: Vec<RegisterEvent>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    state: RegisterBasisState,
    amplitude: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    modes: usize,
    shift_context: Option<usize>,
    transfer_leakage: f64,
    warnings: Vec<String>,
    components: Vec<SnapshotEntry>,
}

fn check_efficiency(eff: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eff) {
        return Err(invalid(format!("efficiency {eff} outside [0, 1]")));
    }
    Ok(eff.sqrt())
}

impl RegisterState {
    /// All molecules in g, cavity and CPB empty.
    pub fn vacuum(register: Arc<ModeRegister>) -> Self {
        Self::from_components(register, [(RegisterBasisState::default(), C64::new(1.0, 0.0))])
    }

    pub fn from_components(
        register: Arc<ModeRegister>,
        comps: impl IntoIterator<Item = (RegisterBasisState, C64)>,
    ) -> Self {
        let mut amplitudes = BTreeMap::new();
        for (s, a) in comps {
            *amplitudes.entry(s).or_insert(ZERO) += a;
        }
        Self {
            register,
            amplitudes,
            shift_context: None,
            transfer_leakage: 0.0,
            warnings: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Product state with qubit `i` in α|0⟩ + β|1⟩ stored as (f, q_i) for every
    /// entry of `qubits`.
    pub fn product(register: Arc<ModeRegister>, qubits: &[(usize, C64, C64)]) -> Result<Self> {
        let mut comps = vec![(RegisterBasisState::default(), C64::new(1.0, 0.0))];
        for &(i, alpha, beta) in qubits {
            if i >= register.len() {
                return Err(invalid(format!("mode {i} outside register of {}", register.len())));
            }
            let mut next = Vec::with_capacity(comps.len() * 2);
            for (s, a) in comps {
                next.push((s.clone(), a * alpha));
                let mut s1 = s;
                s1.insert(ModeOccupation {
                    mode_index: i,
                    level: StoredLevel::F,
                    momentum_offset: Momentum::mode(i),
                })?;
                next.push((s1, a * beta));
            }
            comps = next;
        }
        Ok(Self::from_components(register, comps))
    }

    pub fn register(&self) -> &ModeRegister {
        &self.register
    }

    pub fn register_arc(&self) -> &Arc<ModeRegister> {
        &self.register
    }

    pub fn components(&self) -> impl Iterator<Item = (&RegisterBasisState, &C64)> {
        self.amplitudes.iter()
    }

    pub fn amplitude(&self, s: &RegisterBasisState) -> C64 {
        self.amplitudes.get(s).copied().unwrap_or(ZERO)
    }

    pub fn shift_context(&self) -> Option<usize> {
        self.shift_context
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &RegisterState) -> C64 {
        self.amplitudes
            .iter()
            .map(|(s, a)| a.conj() * other.amplitude(s))
            .sum()
    }

    /// |⟨a|b⟩|² / (‖a‖²‖b‖²).
    pub fn fidelity(&self, other: &RegisterState) -> f64 {
        let n = self.norm_sqr() * other.norm_sqr();
        if n == 0.0 {
            return 0.0;
        }
        self.inner(other).norm_sqr() / n
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.values_mut().for_each(|a| *a /= n);
        }
    }

    fn map_components(
        &self,
        f: impl Fn(&RegisterBasisState, C64) -> Result<Vec<(RegisterBasisState, C64)>>,
    ) -> Result<BTreeMap<RegisterBasisState, C64>> {
        let mut out = BTreeMap::new();
        for (s, &a) in &self.amplitudes {
            for (t, b) in f(s, a)? {
                *out.entry(t).or_insert(ZERO) += b;
            }
        }
        out.retain(|_, a| a.norm_sqr() > PRUNE);
        Ok(out)
    }

    fn with_amplitudes(&self, amplitudes: BTreeMap<RegisterBasisState, C64>) -> Self {
        Self {
            register: self.register.clone(),
            amplitudes,
            shift_context: self.shift_context,
            transfer_leakage: self.transfer_leakage,
            warnings: self.warnings.clone(),
            events: self.events.clone(),
        }
    }

    fn check_mode(&self, j: usize) -> Result<()> {
        if j >= self.register.len() {
            return Err(invalid(format!("mode {j} outside register of {}", self.register.len())));
        }
        Ok(())
    }

    /// Inverted STIRAP with the Stokes beam of mode `j`: every (f, p) becomes
    /// (m, p − q_j).
    pub fn shift_back(&self, j: usize, efficiency: f64) -> Result<Self> {
        self.check_mode(j)?;
        let amp = check_efficiency(efficiency)?;
        if let Some(k) = self.shift_context {
            return Err(Error::Sequencing(format!(
                "shift_back({j}) while the register is already shifted back by mode {k}"
            )));
        }
        let amplitudes = self.map_components(|s, a| {
            if s.occupations.iter().any(|o| o.level == StoredLevel::M) {
                return Err(Error::Sequencing(format!(
                    "shift_back({j}) with an excitation already in level m"
                )));
            }
            let mut t = s.clone();
            let mut factor = a;
            for o in &mut t.occupations {
                o.level = StoredLevel::M;
                o.momentum_offset = o.momentum_offset.add(j, -1);
                factor *= -amp;
            }
            Ok(vec![(t, factor)])
        })?;
        let mut out = self.with_amplitudes(amplitudes);
        out.shift_context = Some(j);
        out.events.push(RegisterEvent::ShiftBack { mode: j, efficiency });
        Ok(out)
    }

    /// Forward STIRAP with the Stokes beam of mode `j`: every (m, p) becomes
    /// (f, p + q_j).
    pub fn shift_forward(&self, j: usize, efficiency: f64) -> Result<Self> {
        self.check_mode(j)?;
        let amp = check_efficiency(efficiency)?;
        match self.shift_context {
            Some(k) if k == j => {}
            Some(k) => {
                return Err(Error::Sequencing(format!(
                    "shift_forward({j}) does not match the pending shift_back({k})"
                )))
            }
            None => {
                return Err(Error::Sequencing(format!(
                    "shift_forward({j}) without a preceding shift_back"
                )))
            }
        }
        let amplitudes = self.map_components(|s, a| {
            let mut t = s.clone();
            let mut factor = a;
            for o in &mut t.occupations {
                if o.level == StoredLevel::M {
                    o.level = StoredLevel::F;
                    o.momentum_offset = o.momentum_offset.add(j, 1);
                    factor *= -amp;
                }
            }
            Ok(vec![(t, factor)])
        })?;
        let mut out = self.with_amplitudes(amplitudes);
        out.shift_context = None;
        out.events.push(RegisterEvent::ShiftForward { mode: j, efficiency });
        Ok(out)
    }

    /// Resonant exchange between the cavity photon and the (m, 0) collective
    /// excitation for `duration` at `settings.collective_coupling`. The mode
    /// label of a newly absorbed excitation is the pending shift context.
    pub fn cavity_mode_swap(&self, direction: SwapDirection, duration: f64, settings: &TransferSettings) -> Result<Self> {
        let j = self.shift_context.ok_or_else(|| {
            Error::Sequencing("cavity transfer requires a preceding shift_back".into())
        })?;
        let amp = check_efficiency(settings.swap_efficiency)?;
        if !(duration >= 0.0) {
            return Err(invalid("transfer duration must be non-negative"));
        }
        for s in self.amplitudes.keys() {
            if let Some(k) = s.zero_momentum_m() {
                if s.cavity_photon {
                    return Err(Error::Sequencing(
                        "cavity photon and (m, 0) excitation present together".into(),
                    ));
                }
                if k != j {
                    return Err(Error::Sequencing(format!(
                        "mode {k} sits at (m, 0) but the transfer targets mode {j}"
                    )));
                }
            } else if s.cavity_photon && s.occupation(j).is_some() {
                return Err(Error::Sequencing(format!("store into occupied mode {j}")));
            }
        }
        let theta = settings.collective_coupling * duration;
        let (sn, cs) = theta.sin_cos();
        let reg = self.register.clone();
        let mut leak = 0.0;
        for (s, a) in &self.amplitudes {
            let exchanging = s.cavity_photon || s.zero_momentum_m().is_some();
            if !exchanging {
                continue;
            }
            let spect: f64 = s
                .occupations
                .iter()
                .filter(|o| o.level == StoredLevel::M && !o.momentum_offset.is_zero())
                .map(|o| spectator_overlap(&reg, &o.momentum_offset).norm_sqr())
                .sum();
            leak += a.norm_sqr() * sn * sn * spect;
        }
        let amplitudes = self.map_components(|s, a| {
            if s.cavity_photon {
                let mut m0 = s.clone();
                m0.cavity_photon = false;
                m0.insert(ModeOccupation {
                    mode_index: j,
                    level: StoredLevel::M,
                    momentum_offset: Momentum::zero(),
                })?;
                Ok(vec![
                    (s.clone(), a * amp * cs),
                    (m0, a * amp * C64::new(0.0, -sn)),
                ])
            } else if let Some(k) = s.zero_momentum_m() {
                let mut ph = s.clone();
                ph.remove(k);
                ph.cavity_photon = true;
                Ok(vec![
                    (s.clone(), a * amp * cs),
                    (ph, a * amp * C64::new(0.0, -sn)),
                ])
            } else {
                Ok(vec![(s.clone(), a)])
            }
        })?;
        let mut out = self.with_amplitudes(amplitudes);
        out.transfer_leakage += leak;
        if leak > settings.leakage_bound {
            out.warnings.push(format!(
                "cavity transfer for mode {j}: spectator overlap leakage {leak:.3e} exceeds {:.1e}",
                settings.leakage_bound
            ));
        }
        out.events.push(RegisterEvent::CavitySwap {
            direction,
            mode: j,
            angle: theta,
            efficiency: settings.swap_efficiency,
            leakage: leak,
        });
        Ok(out)
    }

    fn frame_correct(&self, mode: Option<usize>, photon: bool, phase: C64) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(s, a)| {
                let hit = match mode {
                    Some(j) => s.occupation(j).is_some(),
                    None => photon && s.cavity_photon,
                };
                (s.clone(), if hit { a * phase } else { *a })
            })
            .collect();
        self.with_amplitudes(amplitudes)
    }

    /// Puts a fresh cavity qubit α|0⟩ + β|1⟩ into an empty cavity.
    pub fn load_cavity(&self, alpha: C64, beta: C64) -> Result<Self> {
        let amplitudes = self.map_components(|s, a| {
            if s.cavity_photon {
                return Err(Error::Sequencing("load_cavity with an occupied cavity".into()));
            }
            let mut one = s.clone();
            one.cavity_photon = true;
            Ok(vec![(s.clone(), a * alpha), (one, a * beta)])
        })?;
        Ok(self.with_amplitudes(amplitudes))
    }

    /// Loads the cavity qubit into mode `j` as (f, q_j).
    pub fn store_qubit(&self, j: usize, settings: &TransferSettings) -> Result<Self> {
        self.check_mode(j)?;
        if self.amplitudes.keys().any(|s| s.occupation(j).is_some()) {
            return Err(Error::Sequencing(format!("store into occupied mode {j}")));
        }
        let s = self
            .shift_back(j, settings.stirap_efficiency)?
            .cavity_mode_swap(SwapDirection::Store, settings.pi_duration(), settings)?
            .shift_forward(j, settings.stirap_efficiency)?;
        // Net phase of the loaded excitation is (−i)(−1) = i.
        let phase = -std::f64::consts::FRAC_PI_2;
        let mut out = s.frame_correct(Some(j), false, C64::from_polar(1.0, phase));
        out.events.push(RegisterEvent::FrameCorrection { mode: j, phase });
        Ok(out)
    }

    /// Moves qubit `j` from (f, q_j) onto the cavity.
    pub fn retrieve_qubit(&self, j: usize, settings: &TransferSettings) -> Result<Self> {
        self.check_mode(j)?;
        let residual: f64 = self
            .amplitudes
            .iter()
            .filter(|(s, _)| s.cavity_photon)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if residual > RESIDUAL_PHOTON_LIMIT {
            return Err(Error::Sequencing(format!(
                "retrieve_qubit({j}) with an occupied cavity (photon population {residual:.3e})"
            )));
        }
        let mut base = self.clone();
        if residual > 0.0 {
            // Imperfect earlier gates leave a small photon amplitude that a
            // second photon could not join; it is dropped and booked as loss.
            base.amplitudes.retain(|s, _| !s.cavity_photon);
            base.transfer_leakage += residual;
        }
        let s = base
            .shift_back(j, settings.stirap_efficiency)?
            .cavity_mode_swap(SwapDirection::Retrieve, settings.pi_duration(), settings)?
            .shift_forward(j, settings.stirap_efficiency)?;
        // Net phase of the released photon is (−1)(−i) = i.
        let phase = -std::f64::consts::FRAC_PI_2;
        let mut out = s.frame_correct(None, true, C64::from_polar(1.0, phase));
        out.events.push(RegisterEvent::FrameCorrection { mode: j, phase });
        Ok(out)
    }

    /// Applies a 4×4 operator on (CPB, cavity) in the order (g0, g1, e0, e1).
    pub fn apply_cavity_cpb(&self, u: &Matrix4<C64>, label: &str) -> Result<Self> {
        let idx = |s: &RegisterBasisState| 2 * s.cpb_excited as usize + s.cavity_photon as usize;
        let amplitudes = self.map_components(|s, a| {
            let col = idx(s);
            Ok((0..4)
                .filter(|&row| u[(row, col)] != ZERO)
                .map(|row| {
                    let mut t = s.clone();
                    t.cpb_excited = row >= 2;
                    t.cavity_photon = row % 2 == 1;
                    (t, u[(row, col)] * a)
                })
                .collect())
        })?;
        let mut out = self.with_amplitudes(amplitudes);
        out.events.push(RegisterEvent::CavityCpb { label: label.to_string() });
        Ok(out)
    }

    /// Applies a 2×2 operator on the CPB in the order (g, e).
    pub fn apply_cpb(&self, u: &Matrix2<C64>, label: &str) -> Result<Self> {
        let amplitudes = self.map_components(|s, a| {
            let col = s.cpb_excited as usize;
            Ok((0..2)
                .filter(|&row| u[(row, col)] != ZERO)
                .map(|row| {
                    let mut t = s.clone();
                    t.cpb_excited = row == 1;
                    (t, u[(row, col)] * a)
                })
                .collect())
        })?;
        let mut out = self.with_amplitudes(amplitudes);
        out.events.push(RegisterEvent::Cpb { label: label.to_string() });
        Ok(out)
    }

    pub fn probability_cpb_excited(&self) -> f64 {
        let n = self.norm_sqr();
        if n == 0.0 {
            return 0.0;
        }
        self.amplitudes
            .iter()
            .filter(|(s, _)| s.cpb_excited)
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            / n
    }

    /// Projects the CPB onto `excited` and renormalizes.
    pub fn project_cpb(&self, excited: bool) -> Result<Self> {
        let p = if excited {
            self.probability_cpb_excited()
        } else {
            1.0 - self.probability_cpb_excited()
        };
        if p <= 0.0 {
            return Err(invalid("projection onto a zero-probability outcome"));
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .filter(|(s, _)| s.cpb_excited == excited)
            .map(|(s, a)| (s.clone(), *a))
            .collect();
        let mut out = self.with_amplitudes(amplitudes);
        out.normalize();
        out.events.push(RegisterEvent::ProjectCpb { excited, probability: p });
        Ok(out)
    }

    /// Resets the CPB to g, discarding its state (after a destructive readout).
    pub fn reset_cpb(&self) -> Self {
        let mut out = self.clone();
        let mut amps = BTreeMap::new();
        for (s, a) in &self.amplitudes {
            let mut t = s.clone();
            t.cpb_excited = false;
            *amps.entry(t).or_insert(ZERO) += *a;
        }
        out.amplitudes = amps;
        out
    }

    /// Logical amplitudes over the stored qubits in `modes` when cavity,
    /// CPB and level m are empty; other components are omitted.
    pub fn logical_amplitudes(&self, modes: &[usize]) -> BTreeMap<Vec<bool>, C64> {
        let mut out = BTreeMap::new();
        for (s, a) in &self.amplitudes {
            if s.cavity_photon || s.cpb_excited || s.occupations.iter().any(|o| o.level == StoredLevel::M) {
                continue;
            }
            let bits: Vec<bool> = modes.iter().map(|&m| s.occupation(m).is_some()).collect();
            *out.entry(bits).or_insert(ZERO) += a;
        }
        out
    }

    /// Reduced density matrix of the stored qubit `mode`: [[ρ00, ρ01], [ρ10, ρ11]].
    pub fn reduced_qubit(&self, mode: usize) -> Matrix2<C64> {
        let mut rho = Matrix2::zeros();
        let n = self.norm_sqr();
        // Group components by the state of everything except `mode`.
        let mut groups: BTreeMap<RegisterBasisState, [C64; 2]> = BTreeMap::new();
        for (s, a) in &self.amplitudes {
            let mut rest = s.clone();
            let bit = rest.remove(mode).is_some() as usize;
            groups.entry(rest).or_insert([ZERO; 2])[bit] += *a;
        }
        for v in groups.values() {
            for r in 0..2 {
                for c in 0..2 {
                    rho[(r, c)] += v[r] * v[c].conj();
                }
            }
        }
        if n > 0.0 {
            rho /= C64::new(n, 0.0);
        }
        rho
    }

    pub fn is_hard_core(&self) -> bool {
        self.amplitudes.keys().all(RegisterBasisState::is_hard_core)
    }

    pub fn to_json(&self) -> Result<String> {
        let snap = Snapshot {
            modes: self.register.len(),
            shift_context: self.shift_context,
            transfer_leakage: self.transfer_leakage,
            warnings: self.warnings.clone(),
            components: self
                .amplitudes
                .iter()
                .map(|(s, a)| SnapshotEntry {
                    state: s.clone(),
                    amplitude: [a.re, a.im],
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&snap)?)
    }

    pub fn from_json(register: Arc<ModeRegister>, json: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(json)?;
        if snap.modes != register.len() {
            return Err(invalid("snapshot register size does not match"));
        }
        let mut s = Self::from_components(
            register,
            snap.components
                .into_iter()
                .map(|e| (e.state, C64::new(e.amplitude[0], e.amplitude[1]))),
        );
        if !s.is_hard_core() {
            return Err(invalid("snapshot violates the hard-core constraint"));
        }
        s.shift_context = snap.shift_context;
        s.transfer_leakage = snap.transfer_leakage;
        s.warnings = snap.warnings;
        Ok(s)
    }

    pub fn events_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.events)?)
    }
}

/// ⟨m,0|m,p⟩ for a pattern label p, from the Gram matrix when p = q_a − q_b.
fn spectator_overlap(reg: &ModeRegister, p: &Momentum) -> C64 {
    match p.as_difference() {
        Some((a, b)) => reg.gram(b, a),
        None if p.is_zero() => C64::new(1.0, 0.0),
        None => ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasegeom::{angle_schedule, build_register, make_lattice};

    pub(crate) fn lattice_register(n: usize, k: i64) -> Arc<ModeRegister> {
        let g = make_lattice(n, 1e-3, [0.0, 0.0, 1.0]).unwrap();
        let lambda = 500e-9;
        let angles = angle_schedule(g.pattern_length(), lambda, 1, k).unwrap();
        let k1 = WaveVector::new(2.0 * std::f64::consts::PI / lambda, 0.0, 0.0);
        Arc::new(build_register(&g, k1, &angles, 1e-2).unwrap())
    }

    fn photon_state(reg: &Arc<ModeRegister>, alpha: C64, beta: C64) -> RegisterState {
        let one = RegisterBasisState {
            cavity_photon: true,
            ..Default::default()
        };
        RegisterState::from_components(reg.clone(), [(RegisterBasisState::default(), alpha), (one, beta)])
    }

    #[test]
    fn shift_back_moves_pattern() {
        let reg = lattice_register(16, 3);
        let s = RegisterState::product(reg, &[(0, ZERO, C64::new(1.0, 0.0))]).unwrap();
        let b = s.shift_back(1, 1.0).unwrap();
        let (st, _) = b.components().next().unwrap();
        let o = &st.occupations[0];
        assert_eq!(o.level, StoredLevel::M);
        assert_eq!(o.momentum_offset.as_difference(), Some((0, 1)));
        let f = b.shift_forward(1, 1.0).unwrap();
        assert!((f.fidelity(&s) - 1.0).abs() < 1e-15);
        assert!(f.inner(&s).re > 0.0);
        assert!(matches!(f.shift_forward(1, 1.0), Err(Error::Sequencing(_))));
        assert!(matches!(b.shift_back(1, 1.0), Err(Error::Sequencing(_))));
    }

    #[test]
    fn store_then_retrieve_is_identity() {
        let reg = lattice_register(16, 3);
        let set = TransferSettings::ideal(1e7);
        let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let start = photon_state(&reg, a, b);
        let stored = start.store_qubit(1, &set).unwrap();
        let expect = RegisterState::product(reg.clone(), &[(1, a, b)]).unwrap();
        assert!((stored.inner(&expect) - C64::new(1.0, 0.0)).norm() < 1e-12);
        let back = stored.retrieve_qubit(1, &set).unwrap();
        assert!((back.inner(&start) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(back.transfer_leakage, 0.0);
    }

    #[test]
    fn two_qubit_walkthrough() {
        let reg = lattice_register(16, 3);
        let set = TransferSettings::ideal(1e7);
        let one = C64::new(1.0, 0.0);
        let s = photon_state(&reg, ZERO, one).store_qubit(0, &set).unwrap();
        let s = RegisterState::from_components(
            reg.clone(),
            s.components().map(|(st, a)| {
                let mut t = st.clone();
                t.cavity_photon = true;
                (t, *a)
            }),
        );
        let s = s.store_qubit(1, &set).unwrap();
        let expect = RegisterState::product(reg, &[(0, ZERO, one), (1, ZERO, one)]).unwrap();
        assert!((s.inner(&expect) - one).norm() < 1e-12);
        assert!(s.is_hard_core());
    }

    #[test]
    fn empty_transfers_are_identity() {
        let reg = lattice_register(8, 2);
        let set = TransferSettings::ideal(1e7);
        let v = RegisterState::vacuum(reg);
        let r = v.retrieve_qubit(0, &set).unwrap();
        assert!((r.inner(&v) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let b = v.shift_back(0, 1.0).unwrap();
        let c = b.cavity_mode_swap(SwapDirection::Store, set.pi_duration(), &set).unwrap();
        assert!((c.inner(&b) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip() {
        let reg = lattice_register(8, 2);
        let s = RegisterState::product(reg.clone(), &[(0, C64::new(0.6, 0.0), C64::new(0.0, 0.8))]).unwrap();
        let back = RegisterState::from_json(reg, &s.to_json().unwrap()).unwrap();
        assert_eq!(back.inner(&s), s.inner(&s));
    }
}
