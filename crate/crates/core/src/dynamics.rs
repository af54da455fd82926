//! Time-dependent Schrödinger propagation on an enumerated basis.
//!
//! Each step applies the fourth-order Magnus exponential built from the
//! Hamiltonian at the two Gauss points; the exponential is summed as a Taylor
//! series until the next term is below double precision. Step boundaries are
//! aligned with schedule samples so piecewise-linear kinks never fall inside
//! a step.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{raman_terms, Basis, BasisConfig, BasisState, MolecularLevel, StateVector, SystemParams};
use crate::phasegeom::EnsembleGeometry;
use crate::pulses::{Channel, PulseSchedule};
use crate::sparse::SparseOperator;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Time dependence of one Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `scale * channel(t)`
    Channel(Channel, f64),
}

#[derive(Clone, Debug)]
pub struct HamiltonianTerm {
    pub op: SparseOperator,
    pub coeff: Coefficient,
}

/// H(t) = Σ_k c_k(t) H_k with coefficients read from a pulse schedule.
#[derive(Clone, Debug)]
pub struct DrivenHamiltonian {
    dim: usize,
    terms: Vec<HamiltonianTerm>,
    schedule: Option<Arc<PulseSchedule>>,
}

impl DrivenHamiltonian {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            schedule: None,
        }
    }

    pub fn constant(op: SparseOperator) -> Self {
        let mut h = Self::new(op.dim());
        h.terms.push(HamiltonianTerm {
            op,
            coeff: Coefficient::Constant(1.0),
        });
        h
    }

    pub fn with_schedule(mut self, schedule: PulseSchedule) -> Self {
        self.schedule = Some(Arc::new(schedule));
        self
    }

    pub fn add_constant(mut self, op: SparseOperator, value: f64) -> Result<Self> {
        self.push(op, Coefficient::Constant(value))?;
        Ok(self)
    }

    pub fn add_channel(mut self, op: SparseOperator, ch: Channel, scale: f64) -> Result<Self> {
        self.push(op, Coefficient::Channel(ch, scale))?;
        Ok(self)
    }

    fn push(&mut self, op: SparseOperator, coeff: Coefficient) -> Result<()> {
        if op.dim() != self.dim {
            return Err(invalid("term dimension does not match Hamiltonian"));
        }
        self.terms.push(HamiltonianTerm { op, coeff });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schedule(&self) -> Option<&PulseSchedule> {
        self.schedule.as_deref()
    }

    fn check_schedule(&self, t0: f64, t1: f64) -> Result<()> {
        let needs = self
            .terms
            .iter()
            .filter_map(|t| match t.coeff {
                Coefficient::Channel(ch, _) => Some(ch),
                Coefficient::Constant(_) => None,
            })
            .collect::<Vec<_>>();
        if needs.is_empty() {
            return Ok(());
        }
        let s = self
            .schedule
            .as_ref()
            .ok_or_else(|| invalid("Hamiltonian uses channels but has no schedule"))?;
        for ch in needs {
            if !s.has(ch) {
                return Err(invalid(format!("schedule lacks channel {ch}")));
            }
        }
        let slack = 1e-12 * (s.duration().abs() + t0.abs().max(t1.abs()));
        if t0 < s.t_start() - slack || t1 > s.t_end() + slack {
            return Err(invalid(format!(
                "schedule covers [{}, {}] but propagation requests [{t0}, {t1}]",
                s.t_start(),
                s.t_end()
            )));
        }
        Ok(())
    }

    pub fn coefficients(&self, t: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|term| match term.coeff {
                Coefficient::Constant(v) => v,
                Coefficient::Channel(ch, scale) => {
                    scale * self.schedule.as_ref().map_or(0.0, |s| s.value(ch, t))
                }
            })
            .collect()
    }

    /// `y = H x` with the given coefficients.
    fn apply(&self, coeffs: &[f64], x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        for (term, &c) in self.terms.iter().zip(coeffs) {
            if c != 0.0 {
                term.op.apply_add(C64::new(c, 0.0), x, y);
            }
        }
    }

    /// Upper bound on ‖H(t)‖ over [t0, t1].
    pub fn norm_bound(&self, t0: f64, t1: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                let c = match term.coeff {
                    Coefficient::Constant(v) => v.abs(),
                    Coefficient::Channel(ch, scale) => {
                        let s = self.schedule.as_ref().expect("checked");
                        let vals = s.channel(ch).expect("checked");
                        let grid = s.t_grid();
                        let mut m = s.value(ch, t0).abs().max(s.value(ch, t1).abs());
                        for (t, v) in grid.iter().zip(vals) {
                            if *t > t0 && *t < t1 {
                                m = m.max(v.abs());
                            }
                        }
                        scale.abs() * m
                    }
                };
                c * term.op.row_sum_norm()
            })
            .sum()
    }

    /// Schedule samples strictly inside (t0, t1).
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut pts = vec![t0];
        if let Some(s) = &self.schedule {
            let (lo, hi) = (t0.min(t1), t0.max(t1));
            let mut inner: Vec<f64> = s.t_grid().iter().copied().filter(|t| *t > lo && *t < hi).collect();
            if t1 < t0 {
                inner.reverse();
            }
            pts.extend(inner);
        }
        pts.push(t1);
        pts
    }
}

#[derive(Clone, Debug)]
pub struct PropagationOptions {
    /// Largest allowed amplitude change when the step is halved.
    pub tolerance: f64,
    /// Upper bound on ‖H‖·h per step.
    pub max_phase_per_step: f64,
    pub max_refinements: usize,
    /// Diagonal observables sampled along the run.
    pub observables: Vec<(String, Vec<f64>)>,
    /// Record every n-th step (the final time is always recorded).
    pub trace_every: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_phase_per_step: 0.5,
            max_refinements: 10,
            observables: Vec::new(),
            trace_every: 1,
        }
    }
}

impl PropagationOptions {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn observe(mut self, name: impl Into<String>, diag: Vec<f64>) -> Self {
        self.observables.push((name.into(), diag));
        self
    }

    pub fn trace_every(mut self, n: usize) -> Self {
        self.trace_every = n.max(1);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservableTrace {
    pub name: String,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl ObservableTrace {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub final_state: StateVector,
    pub norm_drift: f64,
    pub observable_traces: Vec<ObservableTrace>,
    /// ∫⟨c†c⟩dt in photon·seconds.
    pub cavity_occupancy_integral: f64,
    /// ∫⟨σ⁺σ⁻⟩dt in seconds.
    pub cpb_occupancy_integral: f64,
    pub steps: usize,
    /// Largest amplitude change seen in the final step-halving check.
    pub convergence_change: f64,
}

#[derive(Serialize)]
struct ResultSummary<'a> {
    norm_drift: f64,
    cavity_occupancy_integral: f64,
    cpb_occupancy_integral: f64,
    steps: usize,
    convergence_change: f64,
    observables: Vec<&'a str>,
}

impl PropagationResult {
    pub fn trace(&self, name: &str) -> Option<&ObservableTrace> {
        self.observable_traces.iter().find(|t| t.name == name)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ResultSummary {
            norm_drift: self.norm_drift,
            cavity_occupancy_integral: self.cavity_occupancy_integral,
            cpb_occupancy_integral: self.cpb_occupancy_integral,
            steps: self.steps,
            convergence_change: self.convergence_change,
            observables: self.observable_traces.iter().map(|t| t.name.as_str()).collect(),
        })?)
    }

    /// CSV with a `t` column followed by one column per observable.
    pub fn write_traces_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.observable_traces.iter().map(|t| t.name.clone()));
        wr.write_record(&header).map_err(|e| invalid(e.to_string()))?;
        if let Some(first) = self.observable_traces.first() {
            for (i, t) in first.t.iter().enumerate() {
                let mut row = vec![t.to_string()];
                row.extend(self.observable_traces.iter().map(|tr| tr.values[i].to_string()));
                wr.write_record(&row).map_err(|e| invalid(e.to_string()))?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

struct Run {
    amplitudes: Vec<C64>,
    traces: Vec<ObservableTrace>,
    cavity_integral: f64,
    cpb_integral: f64,
    steps: usize,
}

fn magnus_step(ham: &DrivenHamiltonian, ta: f64, tb: f64, psi: &mut Vec<C64>, scratch: &mut [Vec<C64>; 5]) {
    let h = tb - ta;
    let mid = 0.5 * (ta + tb);
    let off = h * 3f64.sqrt() / 6.0;
    let c1 = ham.coefficients(mid - off);
    let c2 = ham.coefficients(mid + off);
    let comm = 3f64.sqrt() * h * h / 12.0;
    // Ω v = -i[h/2 (H1+H2) v] + comm·(H1 H2 - H2 H1) v
    let [a, b, ab, ba, _] = scratch;
    let mut omega = |v: &[C64], out: &mut Vec<C64>| {
        ham.apply(&c1, v, a);
        ham.apply(&c2, v, b);
        ham.apply(&c1, b, ab);
        ham.apply(&c2, a, ba);
        for i in 0..v.len() {
            out[i] = C64::new(0.0, -0.5 * h) * (a[i] + b[i]) + comm * (ab[i] - ba[i]);
        }
    };
    let n = psi.len();
    let mut term = psi.clone();
    let mut next = vec![ZERO; n];
    let mut acc = psi.clone();
    let scale: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    for k in 1..=60 {
        omega(&term, &mut next);
        let inv = 1.0 / k as f64;
        let mut size = 0.0f64;
        for i in 0..n {
            next[i] *= inv;
            acc[i] += next[i];
            size = size.max(next[i].norm());
        }
        std::mem::swap(&mut term, &mut next);
        if size < 1e-17 * scale {
            break;
        }
    }
    *psi = acc;
}

fn run_fixed(
    state: &StateVector,
    ham: &DrivenHamiltonian,
    t0: f64,
    t1: f64,
    h_max: f64,
    opts: &PropagationOptions,
    cav: &[f64],
    cpb: &[f64],
    record: bool,
) -> Run {
    let n = state.amplitudes.len();
    let mut scratch: [Vec<C64>; 5] = std::array::from_fn(|_| vec![ZERO; n]);
    let mut psi = state.amplitudes.clone();
    let expect = |psi: &[C64], d: &[f64]| psi.iter().zip(d).map(|(a, w)| a.norm_sqr() * w).sum::<f64>();
    let mut traces: Vec<ObservableTrace> = opts
        .observables
        .iter()
        .map(|(name, _)| ObservableTrace {
            name: name.clone(),
            t: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    let push = |traces: &mut Vec<ObservableTrace>, t: f64, psi: &[C64]| {
        for (tr, (_, d)) in traces.iter_mut().zip(&opts.observables) {
            tr.t.push(t);
            tr.values.push(expect(psi, d));
        }
    };
    if record {
        push(&mut traces, t0, &psi);
    }
    let mut cav_prev = expect(&psi, cav);
    let mut cpb_prev = expect(&psi, cpb);
    let (mut cav_int, mut cpb_int) = (0.0, 0.0);
    let mut steps = 0usize;
    let pts = ham.breakpoints(t0, t1);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).abs();
        if len == 0.0 {
            continue;
        }
        let m = if h_max.is_finite() { (len / h_max).ceil().max(1.0) as usize } else { 1 };
        for s in 0..m {
            let ta = a + (b - a) * s as f64 / m as f64;
            let tb = if s + 1 == m { b } else { a + (b - a) * (s + 1) as f64 / m as f64 };
            magnus_step(ham, ta, tb, &mut psi, &mut scratch);
            steps += 1;
            let cav_now = expect(&psi, cav);
            let cpb_now = expect(&psi, cpb);
            cav_int += 0.5 * (cav_prev + cav_now) * (tb - ta).abs();
            cpb_int += 0.5 * (cpb_prev + cpb_now) * (tb - ta).abs();
            cav_prev = cav_now;
            cpb_prev = cpb_now;
            if record && steps % opts.trace_every == 0 {
                push(&mut traces, tb, &psi);
            }
        }
    }
    if record && traces.first().is_some_and(|t| t.t.last() != Some(&t1)) {
        push(&mut traces, t1, &psi);
    }
    Run {
        amplitudes: psi,
        traces,
        cavity_integral: cav_int,
        cpb_integral: cpb_int,
        steps,
    }
}

/// Propagates `state` from `t0` to `t1` (either direction), halving the step
/// until the final amplitudes change by less than `opts.tolerance`.
pub fn propagate(
    state: &StateVector,
    ham: &DrivenHamiltonian,
    t0: f64,
    t1: f64,
    opts: &PropagationOptions,
) -> Result<PropagationResult> {
    if ham.dim() != state.amplitudes.len() {
        return Err(invalid("state and Hamiltonian dimensions differ"));
    }
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(invalid("propagation times must be finite"));
    }
    let norm0 = state.norm_sqr();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("initial state not normalized (norm² = {norm0})")));
    }
    ham.check_schedule(t0, t1)?;
    for (name, d) in &opts.observables {
        if d.len() != state.amplitudes.len() {
            return Err(invalid(format!("observable {name} has wrong length")));
        }
    }
    let basis = &state.basis;
    let cav = basis.diagonal(|s| s.cavity_photons as f64);
    let cpb = basis.diagonal(|s| s.cpb_excited as u8 as f64);
    let bound = ham.norm_bound(t0.min(t1), t0.max(t1));
    let span = (t1 - t0).abs();
    let mut h_max = if bound > 0.0 {
        (opts.max_phase_per_step / bound).min(span)
    } else {
        f64::INFINITY
    };
    let mut prev = run_fixed(state, ham, t0, t1, h_max, opts, &cav, &cpb, false);
    let mut change = f64::INFINITY;
    for _ in 0..=opts.max_refinements {
        h_max = if h_max.is_finite() { h_max / 2.0 } else { span / 2.0 };
        let next = run_fixed(state, ham, t0, t1, h_max, opts, &cav, &cpb, false);
        change = prev
            .amplitudes
            .iter()
            .zip(&next.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if change < opts.tolerance || span == 0.0 {
            // Re-run the accepted resolution with tracing if requested.
            let run = if opts.observables.is_empty() {
                next
            } else {
                run_fixed(state, ham, t0, t1, h_max, opts, &cav, &cpb, true)
            };
            let final_state = StateVector::from_amplitudes(basis, run.amplitudes)?;
            let norm_drift = (final_state.norm_sqr() - norm0).abs();
            if norm_drift > 1e-8 {
                return Err(Error::Integration {
                    refinements: 0,
                    change: norm_drift,
                    tolerance: 1e-8,
                });
            }
            return Ok(PropagationResult {
                final_state,
                norm_drift,
                observable_traces: run.traces,
                cavity_occupancy_integral: run.cavity_integral,
                cpb_occupancy_integral: run.cpb_integral,
                steps: run.steps,
                convergence_change: change,
            });
        }
        prev = next;
    }
    Err(Error::Integration {
        refinements: opts.max_refinements,
        change,
        tolerance: opts.tolerance,
    })
}

/// First-order decay estimate κ∫⟨c†c⟩dt + γ∫⟨σ⁺σ⁻⟩dt.
pub fn loss_probability(result: &PropagationResult, params: &SystemParams) -> f64 {
    params.kappa * result.cavity_occupancy_integral + params.gamma_cpb * result.cpb_occupancy_integral
}

/// Exchange frequency between one cavity photon and the symmetric |m,0⟩
/// excitation, fitted from brute-force propagation of the Raman Hamiltonian
/// at δ = 0.
pub fn collective_rabi_frequency(geom: &EnsembleGeometry, params: &SystemParams, n_molecules: usize) -> Result<f64> {
    if geom.len() != n_molecules {
        return Err(invalid(format!(
            "geometry has {} molecules, expected {n_molecules}",
            geom.len()
        )));
    }
    let g_eff = params.g_eff()?;
    if g_eff <= 0.0 {
        return Err(Error::Fit("effective coupling is zero; no oscillation to fit".into()));
    }
    let basis = Arc::new(Basis::new(
        BasisConfig::new(n_molecules, 1, 1, false).with_levels(&[MolecularLevel::M]),
    )?);
    let terms = raman_terms(geom, &basis)?;
    let ham = DrivenHamiltonian::new(basis.len()).add_constant(terms.exchange, g_eff)?;
    let photon = BasisState {
        cavity_photons: 1,
        cpb_excited: false,
        molecular_excitations: vec![],
    };
    let start = StateVector::basis_state(&basis, &photon)?;
    let diag = basis.diagonal(|s| s.cavity_photons as f64);

    // Window sized from the norm bound; doubled until P(t) crosses 1/2.
    let bound = ham.norm_bound(0.0, 0.0);
    let mut window = 8.0 * std::f64::consts::PI / bound;
    let samples = 400usize;
    for _ in 0..12 {
        let (ts, ps) = sample_population(&start, &ham, window, samples, &diag)?;
        if let Some(rough) = first_half_crossing(&ts, &ps) {
            // P = cos²(Ωt) crosses 1/2 at Ωt = π/4.
            let omega0 = std::f64::consts::FRAC_PI_4 / rough;
            return refine_frequency(&ts, &ps, omega0);
        }
        window *= 2.0;
    }
    Err(Error::Fit("photon population never crossed 1/2".into()))
}

fn sample_population(
    start: &StateVector,
    ham: &DrivenHamiltonian,
    window: f64,
    samples: usize,
    diag: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let opts = PropagationOptions::default().with_tolerance(1e-12);
    let mut ts = vec![0.0];
    let mut ps = vec![start.expect_diag(diag)];
    let mut psi = start.clone();
    for i in 1..=samples {
        let (a, b) = (window * (i - 1) as f64 / samples as f64, window * i as f64 / samples as f64);
        psi = propagate(&psi, ham, a, b, &opts)?.final_state;
        ts.push(b);
        ps.push(psi.expect_diag(diag));
    }
    Ok((ts, ps))
}

fn first_half_crossing(ts: &[f64], ps: &[f64]) -> Option<f64> {
    (1..ts.len()).find_map(|i| {
        let (a, b) = (ps[i - 1] - 0.5, ps[i] - 0.5);
        (a > 0.0 && b <= 0.0).then(|| ts[i - 1] + (ts[i] - ts[i - 1]) * a / (a - b))
    })
}

/// Least-squares fit of P(t) = cos²(Ωt) by golden-section search near `omega0`.
fn refine_frequency(ts: &[f64], ps: &[f64], omega0: f64) -> Result<f64> {
    let cost = |w: f64| -> f64 {
        ts.iter()
            .zip(ps)
            .map(|(t, p)| {
                let r = p - (w * t).cos().powi(2);
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (omega0 * 0.95, omega0 * 1.05);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while (b - a) > 1e-14 * omega0 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = cost(d);
        }
    }
    let w = 0.5 * (a + b);
    let rms = (cost(w) / ts.len() as f64).sqrt();
    if rms > 1e-6 {
        return Err(Error::Fit(format!(
            "single-frequency model does not describe the exchange (rms residual {rms:.3e})"
        )));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{cpb_terms, enumerate_basis};

    fn jc_basis() -> Arc<Basis> {
        let cfg = BasisConfig::new(1, 2, 2, true).with_levels(&[]);
        Arc::new(Basis::new(cfg).unwrap())
    }

    fn st(p: usize, e: bool) -> BasisState {
        BasisState {
            cavity_photons: p,
            cpb_excited: e,
            molecular_excitations: vec![],
        }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let b = Arc::new(enumerate_basis(2, 1, 1, false).unwrap());
        let h = DrivenHamiltonian::new(b.len());
        let s = StateVector::basis_state(&b, &st(1, false)).unwrap();
        let r = propagate(&s, &h, 0.0, 1e-6, &PropagationOptions::default()).unwrap();
        assert_eq!(r.final_state.amplitudes, s.amplitudes);
        assert!((r.cavity_occupancy_integral - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn resonant_jc_half_period() {
        let b = jc_basis();
        let g = 2.0 * std::f64::consts::PI * 200e6;
        let t = cpb_terms(&b).unwrap();
        let h = DrivenHamiltonian::new(b.len()).add_constant(t.exchange, g).unwrap();
        let s = StateVector::basis_state(&b, &st(0, true)).unwrap();
        let tf = std::f64::consts::PI / (2.0 * g);
        let r = propagate(&s, &h, 0.0, tf, &PropagationOptions::default()).unwrap();
        assert!((r.final_state.amplitude(&st(1, false)).norm_sqr() - 1.0).abs() < 1e-10);
        assert!(r.norm_drift < 1e-12);
    }

    #[test]
    fn detuned_rabi_maximum() {
        let b = jc_basis();
        let g = 1.0e8;
        let delta = 1.7e8;
        let t = cpb_terms(&b).unwrap();
        let h = DrivenHamiltonian::new(b.len())
            .add_constant(t.exchange, g)
            .unwrap()
            .add_constant(t.cpb_number, delta)
            .unwrap();
        let s = StateVector::basis_state(&b, &st(0, true)).unwrap();
        let w = (delta * delta / 4.0 + g * g).sqrt();
        let tf = std::f64::consts::PI / (2.0 * w);
        let r = propagate(&s, &h, 0.0, tf, &PropagationOptions::default()).unwrap();
        let p = r.final_state.amplitude(&st(1, false)).norm_sqr();
        let analytic = 4.0 * g * g / (delta * delta + 4.0 * g * g);
        assert!((p - analytic).abs() < 1e-8, "{p} vs {analytic}");
    }

    #[test]
    fn time_reversal_returns_start() {
        let b = jc_basis();
        let t = cpb_terms(&b).unwrap();
        let ramp = |t: f64| 2e9 * (t / 20e-9 - 0.5);
        let sched = PulseSchedule::from_fn(0.0, 20e-9, 41, &[(Channel::DeltaCpb, &ramp)]).unwrap();
        let h = DrivenHamiltonian::new(b.len())
            .with_schedule(sched)
            .add_constant(t.exchange, 5e8)
            .unwrap()
            .add_channel(t.cpb_number, Channel::DeltaCpb, 1.0)
            .unwrap();
        let mut s = StateVector::from_amplitudes(
            &b,
            b.states()
                .iter()
                .enumerate()
                .map(|(i, _)| C64::new(1.0 + i as f64, 0.5 * i as f64))
                .collect(),
        )
        .unwrap();
        s.normalize();
        let fwd = propagate(&s, &h, 0.0, 20e-9, &PropagationOptions::default()).unwrap();
        let back = propagate(&fwd.final_state, &h, 20e-9, 0.0, &PropagationOptions::default()).unwrap();
        let f = back.final_state.inner(&s).norm_sqr();
        assert!(1.0 - f < 1e-8);
    }
}
