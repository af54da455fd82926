//! Exact composite basis (cavity Fock ⊗ CPB ⊗ molecules) bounded by a total
//! excitation cap, and assembly of the three system Hamiltonians on it.
//!
//! All operators are written in the rotating frame where bare energies are
//! removed; only detunings appear on the diagonal.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phasegeom::{EnsembleGeometry, WaveVector};
use crate::sparse::SparseOperator;

/// Default upper bound on the number of enumerated basis states.
pub const DEFAULT_BASIS_BUDGET: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MolecularLevel {
    #[serde(rename = "g")]
    G,
    #[serde(rename = "m")]
    M,
    #[serde(rename = "f")]
    F,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "e_el")]
    EEl,
}

impl MolecularLevel {
    pub const EXCITED: [MolecularLevel; 4] = [
        MolecularLevel::M,
        MolecularLevel::F,
        MolecularLevel::E,
        MolecularLevel::EEl,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub cavity_photons: usize,
    pub cpb_excited: bool,
    /// Sorted by molecule index; molecules not listed are in `g`.
    pub molecular_excitations: Vec<(usize, MolecularLevel)>,
}

impl BasisState {
    pub fn vacuum() -> Self {
        Self {
            cavity_photons: 0,
            cpb_excited: false,
            molecular_excitations: Vec::new(),
        }
    }

    pub fn excitation_number(&self) -> usize {
        self.cavity_photons + self.cpb_excited as usize + self.molecular_excitations.len()
    }

    pub fn level_of(&self, molecule: usize) -> MolecularLevel {
        self.molecular_excitations
            .iter()
            .find(|(j, _)| *j == molecule)
            .map_or(MolecularLevel::G, |(_, l)| *l)
    }

    /// Same state with molecule `j` moved to `level` (`G` removes it).
    pub fn with_level(&self, molecule: usize, level: MolecularLevel) -> Self {
        let mut out = self.clone();
        out.molecular_excitations.retain(|(j, _)| *j != molecule);
        if level != MolecularLevel::G {
            let pos = out
                .molecular_excitations
                .partition_point(|(j, _)| *j < molecule);
            out.molecular_excitations.insert(pos, (molecule, level));
        }
        out
    }

    pub fn count_level(&self, level: MolecularLevel) -> usize {
        self.molecular_excitations.iter().filter(|(_, l)| *l == level).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub n_molecules: usize,
    pub n_max: usize,
    pub excitation_cap: usize,
    pub include_cpb: bool,
    /// Excited molecular levels admitted into the basis.
    pub levels: Vec<MolecularLevel>,
    pub budget: usize,
}

impl BasisConfig {
    pub fn new(n_molecules: usize, n_max: usize, excitation_cap: usize, include_cpb: bool) -> Self {
        Self {
            n_molecules,
            n_max,
            excitation_cap,
            include_cpb,
            levels: MolecularLevel::EXCITED.to_vec(),
            budget: DEFAULT_BASIS_BUDGET,
        }
    }

    pub fn with_levels(mut self, levels: &[MolecularLevel]) -> Self {
        let mut l: Vec<MolecularLevel> = levels.iter().copied().filter(|l| *l != MolecularLevel::G).collect();
        l.sort();
        l.dedup();
        self.levels = l;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Closed-form basis size: Σ C(N,k) L^k over admissible (photons, cpb, k).
    pub fn size(&self) -> u128 {
        let l = self.levels.len() as u128;
        let cpb_opts: &[usize] = if self.include_cpb { &[0, 1] } else { &[0] };
        let mut total: u128 = 0;
        for p in 0..=self.n_max.min(self.excitation_cap) {
            for &c in cpb_opts {
                if p + c > self.excitation_cap {
                    continue;
                }
                let kmax = (self.excitation_cap - p - c).min(self.n_molecules);
                let mut binom: u128 = 1;
                let mut lk: u128 = 1;
                for k in 0..=kmax {
                    if k > 0 {
                        binom = binom * (self.n_molecules - k + 1) as u128 / k as u128;
                        lk = lk.saturating_mul(l);
                    }
                    total = total.saturating_add(binom.saturating_mul(lk));
                }
            }
        }
        total
    }
}

/// Enumerated basis with a reverse index.
#[derive(Clone, Debug)]
pub struct Basis {
    config: BasisConfig,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl Basis {
    pub fn new(config: BasisConfig) -> Result<Self> {
        if config.n_molecules == 0 {
            return Err(invalid("basis needs n_molecules >= 1"));
        }
        if config.excitation_cap == 0 {
            return Err(invalid("basis needs excitation_cap >= 1"));
        }
        let size = config.size();
        if size > config.budget as u128 {
            return Err(Error::Capacity {
                size,
                budget: config.budget,
                n_molecules: config.n_molecules,
                n_max: config.n_max,
                excitation_cap: config.excitation_cap,
            });
        }
        let mut states = Vec::with_capacity(size as usize);
        let cpb_opts: &[bool] = if config.include_cpb { &[false, true] } else { &[false] };
        for p in 0..=config.n_max.min(config.excitation_cap) {
            for &c in cpb_opts {
                let used = p + c as usize;
                if used > config.excitation_cap {
                    continue;
                }
                let budget = config.excitation_cap - used;
                let mut current = Vec::new();
                molecular_configs(&config, 0, budget, &mut current, &mut |exc| {
                    states.push(BasisState {
                        cavity_photons: p,
                        cpb_excited: c,
                        molecular_excitations: exc.to_vec(),
                    })
                });
            }
        }
        states.sort();
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Self {
            config,
            states,
            index,
        })
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn n_molecules(&self) -> usize {
        self.config.n_molecules
    }

    pub fn has_level(&self, l: MolecularLevel) -> bool {
        self.config.levels.contains(&l)
    }

    /// Diagonal operator with entries `f(state)`.
    pub fn diagonal(&self, f: impl Fn(&BasisState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BasisDoc {
            config: self.config.clone(),
            states: self.states.clone(),
        })?)
    }
}

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    config: BasisConfig,
    states: Vec<BasisState>,
}

fn molecular_configs(
    config: &BasisConfig,
    start: usize,
    budget: usize,
    current: &mut Vec<(usize, MolecularLevel)>,
    emit: &mut dyn FnMut(&[(usize, MolecularLevel)]),
) {
    emit(current);
    if budget == 0 {
        return;
    }
    for j in start..config.n_molecules {
        for &l in &config.levels {
            current.push((j, l));
            molecular_configs(config, j + 1, budget - 1, current, emit);
            current.pop();
        }
    }
}

pub fn enumerate_basis(
    n_molecules: usize,
    n_max: usize,
    excitation_cap: usize,
    include_cpb: bool,
) -> Result<Basis> {
    Basis::new(BasisConfig::new(n_molecules, n_max, excitation_cap, include_cpb))
}

/// Physical parameters of the hybrid device. Rates in rad/s or 1/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Single-molecule cavity coupling g.
    pub g_single: f64,
    /// One-photon detuning of the Raman legs from the rotational state.
    pub raman_detuning: f64,
    /// Classical microwave Rabi frequency of the Raman transition.
    pub omega_mw: f64,
    /// CPB-cavity coupling.
    pub g_c: f64,
    /// Cavity photon loss rate.
    pub kappa: f64,
    /// CPB relaxation rate 1/T1.
    pub gamma_cpb: f64,
    /// CPB dephasing rate 1/T2.
    pub gamma_phi: f64,
}

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

impl SystemParams {
    /// Device figures used throughout: g = 2π×50 kHz, g_c = 2π×200 MHz,
    /// κ = 2π×5 kHz, T1 = 4 µs, T2 = 1 µs.
    pub fn reference() -> Self {
        Self {
            g_single: TWO_PI * 50e3,
            raman_detuning: TWO_PI * 100e6,
            omega_mw: TWO_PI * 40e6,
            g_c: TWO_PI * 200e6,
            kappa: TWO_PI * 5e3,
            gamma_cpb: 1.0 / 4e-6,
            gamma_phi: 1.0 / 1e-6,
        }
    }

    /// g_eff = Ω_MW g / 2Δ.
    pub fn g_eff(&self) -> Result<f64> {
        if self.raman_detuning == 0.0 {
            return Err(invalid("raman_detuning must be non-zero for the effective coupling"));
        }
        Ok(self.omega_mw * self.g_single / (2.0 * self.raman_detuning))
    }

    pub fn t1(&self) -> f64 {
        1.0 / self.gamma_cpb
    }

    pub fn t2(&self) -> f64 {
        1.0 / self.gamma_phi
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g_single", self.g_single),
            ("g_c", self.g_c),
            ("kappa", self.kappa),
            ("gamma_cpb", self.gamma_cpb),
            ("gamma_phi", self.gamma_phi),
            ("omega_mw", self.omega_mw),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a non-negative finite rate")));
            }
        }
        if !self.raman_detuning.is_finite() {
            return Err(invalid("raman_detuning must be finite"));
        }
        Ok(())
    }
}

/// Shared handle on a basis; state vectors and operators point at it.
pub type BasisRef = Arc<Basis>;

#[derive(Clone, Debug)]
pub struct StateVector {
    pub basis: BasisRef,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn basis_state(basis: &BasisRef, s: &BasisState) -> Result<Self> {
        let i = basis
            .index_of(s)
            .ok_or_else(|| invalid(format!("state {s:?} not in basis")))?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.len()];
        amplitudes[i] = C64::new(1.0, 0.0);
        Ok(Self {
            basis: basis.clone(),
            amplitudes,
        })
    }

    pub fn from_amplitudes(basis: &BasisRef, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(invalid("amplitude vector length does not match basis"));
        }
        Ok(Self {
            basis: basis.clone(),
            amplitudes,
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn amplitude(&self, s: &BasisState) -> C64 {
        self.basis
            .index_of(s)
            .map_or(C64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    /// Expectation of a diagonal observable.
    pub fn expect_diag(&self, diag: &[f64]) -> f64 {
        self.amplitudes.iter().zip(diag).map(|(a, d)| a.norm_sqr() * d).sum()
    }

    pub fn population_where(&self, f: impl Fn(&BasisState) -> bool) -> f64 {
        self.basis
            .states()
            .iter()
            .zip(&self.amplitudes)
            .filter(|(s, _)| f(s))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

fn check_geometry(geom: &EnsembleGeometry, basis: &Basis) -> Result<()> {
    if geom.len() != basis.n_molecules() {
        return Err(invalid(format!(
            "geometry has {} molecules, basis has {}",
            geom.len(),
            basis.n_molecules()
        )));
    }
    Ok(())
}

/// Σ_j w_j |to_j⟩⟨from_j| on the basis (molecular transition only).
fn molecular_transition(
    basis: &Basis,
    from: MolecularLevel,
    to: MolecularLevel,
    weights: &[C64],
) -> SparseOperator {
    let mut trip = Vec::new();
    for (c, s) in basis.states().iter().enumerate() {
        for j in 0..basis.n_molecules() {
            if s.level_of(j) != from {
                continue;
            }
            if let Some(r) = basis.index_of(&s.with_level(j, to)) {
                trip.push((r, c, weights[j]));
            }
        }
    }
    SparseOperator::from_triplets(basis.len(), trip)
}

fn diagonal_operator(basis: &Basis, f: impl Fn(&BasisState) -> f64) -> SparseOperator {
    SparseOperator::from_triplets(
        basis.len(),
        basis
            .states()
            .iter()
            .enumerate()
            .map(|(i, s)| (i, i, C64::new(f(s), 0.0)))
            .collect(),
    )
}

/// Hermitian building blocks of the optical m ↔ e_el ↔ f coupling.
#[derive(Clone, Debug)]
pub struct OpticalTerms {
    /// Σ_j e^{ik1·x_j}|e_el,j⟩⟨m_j| + h.c.
    pub pump: SparseOperator,
    /// Σ_j e^{ik2·x_j}|e_el,j⟩⟨f_j| + h.c.
    pub stokes: SparseOperator,
    /// Number of molecules in e_el.
    pub n_excited: SparseOperator,
    /// Number of molecules in f.
    pub n_f: SparseOperator,
}

pub fn optical_terms(
    geom: &EnsembleGeometry,
    basis: &Basis,
    k1: &WaveVector,
    k2: &WaveVector,
) -> Result<OpticalTerms> {
    check_geometry(geom, basis)?;
    for l in [MolecularLevel::M, MolecularLevel::F, MolecularLevel::EEl] {
        if !basis.has_level(l) {
            return Err(invalid(format!("basis lacks level {l:?} needed for optical coupling")));
        }
    }
    if !k1.is_finite() || !k2.is_finite() {
        return Err(invalid("wave vectors must be finite"));
    }
    let pump = molecular_transition(basis, MolecularLevel::M, MolecularLevel::EEl, &geom.phases(k1));
    let stokes = molecular_transition(basis, MolecularLevel::F, MolecularLevel::EEl, &geom.phases(k2));
    Ok(OpticalTerms {
        pump: pump.hermitian_part(),
        stokes: stokes.hermitian_part(),
        n_excited: diagonal_operator(basis, |s| s.count_level(MolecularLevel::EEl) as f64),
        n_f: diagonal_operator(basis, |s| s.count_level(MolecularLevel::F) as f64),
    })
}

/// Diagonal detunings of the optical Λ system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpticalDetunings {
    /// Energy of e_el relative to m (one-photon detuning).
    pub excited: f64,
    /// Energy of f relative to m (two-photon detuning).
    pub two_photon: f64,
}

pub fn build_optical_storage_hamiltonian(
    geom: &EnsembleGeometry,
    basis: &Basis,
    omega1: f64,
    k1: &WaveVector,
    omega2: f64,
    k2: &WaveVector,
    detunings: OpticalDetunings,
) -> Result<SparseOperator> {
    let t = optical_terms(geom, basis, k1, k2)?;
    let one = |x: f64| C64::new(x, 0.0);
    t.pump
        .scaled(one(omega1))
        .sum(&t.stokes.scaled(one(omega2)))?
        .sum(&t.n_excited.scaled(one(detunings.excited)))?
        .sum(&t.n_f.scaled(one(detunings.two_photon)))
}

/// Building blocks of the cavity-molecule Raman Hamiltonian.
#[derive(Clone, Debug)]
pub struct RamanTerms {
    /// c† Σ_j |g_j⟩⟨m_j| + h.c.
    pub exchange: SparseOperator,
    /// c†c
    pub photon_number: SparseOperator,
}

fn photon_raising(basis: &Basis, from: &BasisState) -> Option<(usize, f64)> {
    let mut s = from.clone();
    s.cavity_photons += 1;
    basis
        .index_of(&s)
        .map(|r| (r, (from.cavity_photons as f64 + 1.0).sqrt()))
}

pub fn raman_terms(geom: &EnsembleGeometry, basis: &Basis) -> Result<RamanTerms> {
    check_geometry(geom, basis)?;
    if basis.config().n_max == 0 {
        return Err(invalid("raman coupling needs cavity photons in the basis"));
    }
    if !basis.has_level(MolecularLevel::M) {
        return Err(invalid("raman coupling needs level m in the basis"));
    }
    let mut trip = Vec::new();
    for (c, s) in basis.states().iter().enumerate() {
        for (j, l) in &s.molecular_excitations {
            if *l != MolecularLevel::M {
                continue;
            }
            let lowered = s.with_level(*j, MolecularLevel::G);
            if let Some((r, amp)) = photon_raising(basis, &lowered) {
                trip.push((r, c, C64::new(amp, 0.0)));
            }
        }
    }
    let exchange = SparseOperator::from_triplets(basis.len(), trip).hermitian_part();
    Ok(RamanTerms {
        exchange,
        photon_number: diagonal_operator(basis, |s| s.cavity_photons as f64),
    })
}

pub fn build_raman_cavity_hamiltonian(
    geom: &EnsembleGeometry,
    basis: &Basis,
    g_eff: f64,
    delta: f64,
) -> Result<SparseOperator> {
    let t = raman_terms(geom, basis)?;
    t.exchange
        .scaled(C64::new(g_eff, 0.0))
        .sum(&t.photon_number.scaled(C64::new(-delta, 0.0)))
}

/// Building blocks of the CPB-cavity Jaynes-Cummings Hamiltonian.
#[derive(Clone, Debug)]
pub struct CpbTerms {
    /// σ⁻c† + σ⁺c
    pub exchange: SparseOperator,
    /// σ⁺σ⁻
    pub cpb_number: SparseOperator,
}

pub fn cpb_terms(basis: &Basis) -> Result<CpbTerms> {
    if !basis.config().include_cpb {
        return Err(invalid("basis does not include the CPB"));
    }
    let mut trip = Vec::new();
    for (c, s) in basis.states().iter().enumerate() {
        if !s.cpb_excited {
            continue;
        }
        let mut lowered = s.clone();
        lowered.cpb_excited = false;
        if let Some((r, amp)) = photon_raising(basis, &lowered) {
            trip.push((r, c, C64::new(amp, 0.0)));
        }
    }
    let exchange = SparseOperator::from_triplets(basis.len(), trip).hermitian_part();
    Ok(CpbTerms {
        exchange,
        cpb_number: diagonal_operator(basis, |s| s.cpb_excited as u8 as f64),
    })
}

pub fn build_cpb_hamiltonian(basis: &Basis, g_c: f64, delta_cpb: f64) -> Result<SparseOperator> {
    let t = cpb_terms(basis)?;
    t.exchange
        .scaled(C64::new(g_c, 0.0))
        .sum(&t.cpb_number.scaled(C64::new(delta_cpb, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasegeom::make_lattice;

    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    #[test]
    fn basis_counts() {
        assert_eq!(enumerate_basis(1, 1, 1, false).unwrap().len(), 6);
        assert_eq!(enumerate_basis(2, 0, 1, false).unwrap().len(), 9);
    }

    #[test]
    fn basis_is_sorted_and_unique() {
        let b = enumerate_basis(3, 2, 2, true).unwrap();
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        assert!(b.states().iter().all(|s| s.excitation_number() <= 2));
        assert_eq!(b.index_of(&BasisState::vacuum()), Some(0));
    }

    #[test]
    fn capacity_error_names_parameters() {
        let cfg = BasisConfig::new(200, 2, 3, true).with_budget(1000);
        match Basis::new(cfg).unwrap_err() {
            Error::Capacity { n_molecules, excitation_cap, .. } => {
                assert_eq!(n_molecules, 200);
                assert_eq!(excitation_cap, 3);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(enumerate_basis(0, 1, 1, false).is_err());
        assert!(enumerate_basis(1, 1, 0, false).is_err());
    }

    #[test]
    fn cpb_matrix_elements() {
        let b = enumerate_basis(1, 2, 2, true).unwrap();
        let g = 3.0;
        let h = build_cpb_hamiltonian(&b, g, 0.7).unwrap();
        let st = |p: usize, e: bool| BasisState {
            cavity_photons: p,
            cpb_excited: e,
            molecular_excitations: vec![],
        };
        let i = |s: &BasisState| b.index_of(s).unwrap();
        assert!((h.get(i(&st(1, false)), i(&st(0, true))) - C64::new(g, 0.0)).norm() < 1e-15);
        assert!((h.get(i(&st(2, false)), i(&st(1, true))) - C64::new(2f64.sqrt() * g, 0.0)).norm() < 1e-14);
        assert!((h.get(i(&st(0, true)), i(&st(0, true))) - C64::new(0.7, 0.0)).norm() < 1e-15);
        let h0 = build_cpb_hamiltonian(&b, 0.0, 0.7).unwrap();
        for (r, c, v) in h0.triplets() {
            assert_eq!(r, c);
            assert!(b.state(r).cpb_excited);
            assert_eq!(v, C64::new(0.7, 0.0));
        }
    }

    #[test]
    fn optical_single_molecule_is_lambda_system() {
        let geom = make_lattice(1, 1e-3, Z).unwrap();
        let b = enumerate_basis(1, 0, 1, false).unwrap();
        let k = WaveVector::new(1e7, 0.0, 0.0);
        let h = build_optical_storage_hamiltonian(&geom, &b, 2.0, &k, 5.0, &k, OpticalDetunings::default()).unwrap();
        let idx = |l| b.index_of(&BasisState::vacuum().with_level(0, l)).unwrap();
        let (m, f, e) = (idx(MolecularLevel::M), idx(MolecularLevel::F), idx(MolecularLevel::EEl));
        assert!((h.get(e, m) - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((h.get(e, f) - C64::new(5.0, 0.0)).norm() < 1e-15);
        assert_eq!(h.get(m, f), C64::new(0.0, 0.0));
        let zero = build_optical_storage_hamiltonian(&geom, &b, 0.0, &k, 0.0, &k, OpticalDetunings::default()).unwrap();
        assert_eq!(zero.nnz(), 0);
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let geom = make_lattice(3, 1e-3, Z).unwrap();
        let b = enumerate_basis(2, 1, 1, false).unwrap();
        assert!(build_raman_cavity_hamiltonian(&geom, &b, 1.0, 0.0).is_err());
    }
}
