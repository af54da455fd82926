//! CPB-cavity gates: detuning-sweep SWAP and conditional phase, microwave
//! rotations of the CPB, dispersive readout, and gate-fidelity metrics.
//!
//! The two-qubit computational basis is ordered (g0, g1, e0, e1) where the
//! letter is the CPB state and the digit the cavity photon number. Under the
//! Jaynes-Cummings Hamiltonian the dynamics splits into the invariant blocks
//! {g0}, {g1, e0} and {g2, e1}; each block is propagated with a closed-form
//! 2×2 fourth-order Magnus step.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hilbert::SystemParams;
use crate::pulses::{check_endpoint_ratio, Channel, PulseSchedule};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Leakage and population-loss level above which reports carry a warning.
pub const WARNING_LEVEL: f64 = 1e-3;

/// Default ‖H‖·h bound per Magnus step in the block engine.
pub const DEFAULT_MAX_PHASE: f64 = 0.1;

/// exp(-iK) for a 2×2 Hermitian K.
fn expm_herm2(k: &Matrix2<C64>) -> Matrix2<C64> {
    let a0 = 0.5 * (k[(0, 0)].re + k[(1, 1)].re);
    let az = 0.5 * (k[(0, 0)].re - k[(1, 1)].re);
    let ax = k[(0, 1)].re;
    let ay = -k[(0, 1)].im;
    let r = (ax * ax + ay * ay + az * az).sqrt();
    let (s, c) = r.sin_cos();
    let f = if r > 1e-300 { s / r } else { 1.0 };
    let i = C64::new(0.0, 1.0);
    // cos r · I − i sin r (n·σ)
    let m = Matrix2::new(
        C64::new(c, 0.0) - i * f * az,
        -i * f * C64::new(ax, -ay),
        -i * f * C64::new(ax, ay),
        C64::new(c, 0.0) + i * f * az,
    );
    m * C64::from_polar(1.0, -a0)
}

fn block_h(coupling: f64, delta: f64) -> Matrix2<C64> {
    Matrix2::new(ZERO, C64::new(coupling, 0.0), C64::new(coupling, 0.0), C64::new(delta, 0.0))
}

/// Propagators of the two coupled JC blocks plus occupancy integrals for each
/// computational input.
#[derive(Clone, Debug)]
pub struct JcEvolution {
    /// Basis (g1, e0).
    pub block_a: Matrix2<C64>,
    /// Basis (g2, e1).
    pub block_b: Matrix2<C64>,
    /// ∫⟨c†c⟩dt for inputs g0, g1, e0, e1.
    pub cavity_occupancy: [f64; 4],
    /// ∫⟨σ⁺σ⁻⟩dt for inputs g0, g1, e0, e1.
    pub cpb_occupancy: [f64; 4],
    pub duration: f64,
    pub steps: usize,
}

impl JcEvolution {
    /// Restriction of the propagator to (g0, g1, e0, e1).
    pub fn computational(&self) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = ONE;
        m[(1, 1)] = self.block_a[(0, 0)];
        m[(1, 2)] = self.block_a[(0, 1)];
        m[(2, 1)] = self.block_a[(1, 0)];
        m[(2, 2)] = self.block_a[(1, 1)];
        m[(3, 3)] = self.block_b[(1, 1)];
        m
    }

    /// Population transferred from e1 to g2.
    pub fn leakage_to_g2(&self) -> f64 {
        self.block_b[(0, 1)].norm_sqr()
    }

    /// First-order decay probability averaged over the four computational
    /// inputs.
    pub fn loss_estimate(&self, params: &SystemParams) -> f64 {
        (0..4)
            .map(|i| params.kappa * self.cavity_occupancy[i] + params.gamma_cpb * self.cpb_occupancy[i])
            .sum::<f64>()
            / 4.0
    }
}

/// Propagates the JC blocks through the `delta_cpb` channel of `schedule`.
pub fn evolve_jc(schedule: &PulseSchedule, g_c: f64, max_phase: f64) -> Result<JcEvolution> {
    let deltas = schedule
        .channel(Channel::DeltaCpb)
        .ok_or_else(|| invalid("schedule lacks channel delta_cpb"))?;
    if !(max_phase > 0.0) || !g_c.is_finite() {
        return Err(invalid("max_phase must be positive and g_c finite"));
    }
    let grid = schedule.t_grid();
    let couplings = [g_c, 2f64.sqrt() * g_c];
    let mut blocks = [Matrix2::<C64>::identity(), Matrix2::<C64>::identity()];
    let mut cav = [0.0; 4];
    let mut cpb = [0.0; 4];
    // Occupation of (cavity, cpb) for each input column at the current time.
    let occ = |blocks: &[Matrix2<C64>; 2]| -> ([f64; 4], [f64; 4]) {
        let a = &blocks[0];
        let b = &blocks[1];
        let mut c = [0.0; 4];
        let mut q = [0.0; 4];
        for (slot, col) in [(1usize, 0usize), (2, 1)] {
            c[slot] = a[(0, col)].norm_sqr();
            q[slot] = a[(1, col)].norm_sqr();
        }
        c[3] = 2.0 * b[(0, 1)].norm_sqr() + b[(1, 1)].norm_sqr();
        q[3] = b[(1, 1)].norm_sqr();
        (c, q)
    };
    let (mut c_prev, mut q_prev) = occ(&blocks);
    let gauss = 3f64.sqrt() / 6.0;
    let i = C64::new(0.0, 1.0);
    let mut steps = 0usize;
    for s in 0..grid.len() - 1 {
        let (ta, tb) = (grid[s], grid[s + 1]);
        let (da, db) = (deltas[s], deltas[s + 1]);
        let dmax = da.abs().max(db.abs());
        let norm = 0.5 * dmax + (0.25 * dmax * dmax + couplings[1] * couplings[1]).sqrt();
        let m = (((tb - ta) * norm / max_phase).ceil() as usize).max(1);
        let h = (tb - ta) / m as f64;
        for k in 0..m {
            let x1 = (k as f64 + 0.5 - gauss) / m as f64;
            let x2 = (k as f64 + 0.5 + gauss) / m as f64;
            let d1 = da + (db - da) * x1;
            let d2 = da + (db - da) * x2;
            for (blk, &cpl) in blocks.iter_mut().zip(&couplings) {
                let h1 = block_h(cpl, d1);
                let h2 = block_h(cpl, d2);
                let comm = h2 * h1 - h1 * h2;
                let kmat = (h1 + h2) * C64::new(0.5 * h, 0.0) - comm * (i * (3f64.sqrt() * h * h / 12.0));
                *blk = expm_herm2(&kmat) * *blk;
            }
            steps += 1;
            let (c_now, q_now) = occ(&blocks);
            for j in 0..4 {
                cav[j] += 0.5 * (c_prev[j] + c_now[j]) * h;
                cpb[j] += 0.5 * (q_prev[j] + q_now[j]) * h;
            }
            c_prev = c_now;
            q_prev = q_now;
        }
    }
    Ok(JcEvolution {
        block_a: blocks[0],
        block_b: blocks[1],
        cavity_occupancy: cav,
        cpb_occupancy: cpb,
        duration: schedule.duration(),
        steps,
    })
}

pub fn swap_target() -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    m[(0, 0)] = ONE;
    m[(1, 2)] = ONE;
    m[(2, 1)] = ONE;
    m[(3, 3)] = ONE;
    m
}

pub fn cz_target() -> Matrix4<C64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(ONE, ONE, ONE, -ONE))
}

/// Local phase frame diag(1, e^{iα}, e^{iβ}, e^{i(α+β)}) with α acting on the
/// cavity qubit and β on the CPB qubit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FramePhases {
    pub cavity: f64,
    pub cpb: f64,
}

impl FramePhases {
    pub fn matrix(&self) -> Matrix4<C64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(
            ONE,
            C64::from_polar(1.0, self.cavity),
            C64::from_polar(1.0, self.cpb),
            C64::from_polar(1.0, self.cavity + self.cpb),
        ))
    }
}

/// Frame phases maximizing |Tr(T† D U)|, found by alternating exact
/// maximization over each phase from several starting points.
pub fn optimal_local_z(u: &Matrix4<C64>, target: &Matrix4<C64>) -> FramePhases {
    let w = u * target.adjoint();
    let d: [C64; 4] = std::array::from_fn(|k| w[(k, k)]);
    let value = |a: f64, b: f64| {
        (d[0] + C64::from_polar(1.0, a) * d[1] + C64::from_polar(1.0, b) * d[2] + C64::from_polar(1.0, a + b) * d[3])
            .norm()
    };
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for start in 0..8 {
        let mut b = start as f64 * PI / 4.0;
        let mut a = 0.0;
        for _ in 0..200 {
            let (pa, qa) = (d[0] + C64::from_polar(1.0, b) * d[2], d[1] + C64::from_polar(1.0, b) * d[3]);
            let a_new = pa.arg() - qa.arg();
            let (pb, qb) = (d[0] + C64::from_polar(1.0, a_new) * d[1], d[2] + C64::from_polar(1.0, a_new) * d[3]);
            let b_new = pb.arg() - qb.arg();
            let done = (a_new - a).abs() + (b_new - b).abs() < 1e-15;
            a = a_new;
            b = b_new;
            if done {
                break;
            }
        }
        let v = value(a, b);
        if v > best.0 {
            best = (v, a, b);
        }
    }
    let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
    FramePhases {
        cavity: wrap(best.1),
        cpb: wrap(best.2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityMetrics {
    pub average_fidelity: f64,
    pub process_fidelity: f64,
    /// 1 − min over pure inputs of |⟨ψ|T†M|ψ⟩|², from the numerical range of
    /// the eigenvalues of T†M.
    pub worst_case_infidelity: f64,
    /// 1 − Tr(M†M)/d.
    pub leakage: f64,
}

/// Fidelity of a (possibly non-unitary) subspace operator `m` against a
/// unitary `target`, up to global phase.
pub fn fidelity_metrics(m: &DMatrix<C64>, target: &DMatrix<C64>) -> FidelityMetrics {
    let d = m.nrows() as f64;
    let v = target.adjoint() * m;
    let tr = v.trace();
    let tmm = (m.adjoint() * m).trace().re;
    let average_fidelity = ((tmm + tr.norm_sqr()) / (d * (d + 1.0))).clamp(0.0, 1.0);
    let process_fidelity = (tr.norm_sqr() / (d * d)).clamp(0.0, 1.0);
    let eig = v.clone().schur().eigenvalues();
    let worst_case_infidelity = match eig {
        Some(ev) => {
            let ev: Vec<C64> = ev.iter().copied().collect();
            let mut min_dist = ev.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            for a in 0..ev.len() {
                for b in (a + 1)..ev.len() {
                    min_dist = min_dist.min(segment_distance(ev[a], ev[b]));
                }
            }
            (1.0 - min_dist * min_dist).clamp(0.0, 1.0)
        }
        None => 1.0 - process_fidelity,
    };
    FidelityMetrics {
        average_fidelity,
        process_fidelity,
        worst_case_infidelity,
        leakage: (1.0 - tmm / d).max(0.0),
    }
}

fn segment_distance(a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return a.norm();
    }
    let t = (-(a.conj() * ab).re / len2).clamp(0.0, 1.0);
    (a + ab * t).norm()
}

fn to_dmatrix4(m: &Matrix4<C64>) -> DMatrix<C64> {
    DMatrix::from_iterator(4, 4, m.iter().copied())
}

/// Serializable complex matrix as rows of [re, im] pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

pub fn complex_rows(m: &DMatrix<C64>) -> ComplexRows {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn from_complex_rows(rows: &ComplexRows) -> Result<DMatrix<C64>> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(invalid("ragged complex matrix"));
    }
    Ok(DMatrix::from_fn(n, cols, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub target: String,
    pub target_operator: ComplexRows,
    /// Propagator restricted to the computational subspace, before frame
    /// correction.
    pub achieved_operator: ComplexRows,
    /// Virtual-Z frame applied before computing fidelities.
    pub frame: Option<FramePhases>,
    pub average_fidelity: f64,
    pub process_fidelity: f64,
    pub worst_case_infidelity: f64,
    pub leakage: f64,
    pub conditional_phase: Option<f64>,
    /// |⟨g1|U|e0⟩|² for sweeps.
    pub population_transfer: Option<f64>,
    pub duration: f64,
    pub loss_estimate: f64,
    pub warnings: Vec<String>,
}

impl GateReport {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.average_fidelity
    }

    pub fn achieved(&self) -> DMatrix<C64> {
        from_complex_rows(&self.achieved_operator).expect("well-formed")
    }

    /// Achieved operator with the frame correction applied.
    pub fn corrected(&self) -> DMatrix<C64> {
        let m = self.achieved();
        match self.frame {
            Some(f) if m.nrows() == 4 => to_dmatrix4(&f.matrix()) * m,
            _ => m,
        }
    }

    pub fn write_operator_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "re", "im"]).map_err(|e| invalid(e.to_string()))?;
        for (r, row) in self.achieved_operator.iter().enumerate() {
            for (c, z) in row.iter().enumerate() {
                wr.write_record([r.to_string(), c.to_string(), z[0].to_string(), z[1].to_string()])
                    .map_err(|e| invalid(e.to_string()))?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Conditional phase φ_e1 − φ_e0 − φ_g1 + φ_g0 of the diagonal, in [0, 2π).
pub fn conditional_phase(u: &Matrix4<C64>) -> f64 {
    (u[(3, 3)].arg() - u[(2, 2)].arg() - u[(1, 1)].arg() + u[(0, 0)].arg()).rem_euclid(2.0 * PI)
}

fn two_qubit_report(
    name: &str,
    target: Matrix4<C64>,
    evo: &JcEvolution,
    params: &SystemParams,
) -> GateReport {
    let u = evo.computational();
    let frame = optimal_local_z(&u, &target);
    let corrected = frame.matrix() * u;
    let metrics = fidelity_metrics(&to_dmatrix4(&corrected), &to_dmatrix4(&target));
    GateReport {
        target: name.to_string(),
        target_operator: complex_rows(&to_dmatrix4(&target)),
        achieved_operator: complex_rows(&to_dmatrix4(&u)),
        frame: Some(frame),
        average_fidelity: metrics.average_fidelity,
        process_fidelity: metrics.process_fidelity,
        worst_case_infidelity: metrics.worst_case_infidelity,
        leakage: metrics.leakage,
        conditional_phase: None,
        population_transfer: None,
        duration: evo.duration,
        loss_estimate: evo.loss_estimate(params),
        warnings: Vec::new(),
    }
}

fn check_sweep_endpoints(schedule: &PulseSchedule, g_c: f64) -> Result<()> {
    let d = schedule
        .channel(Channel::DeltaCpb)
        .ok_or_else(|| invalid("schedule lacks channel delta_cpb"))?;
    check_endpoint_ratio(d[0], g_c)?;
    check_endpoint_ratio(d[d.len() - 1], g_c)
}

/// SWAP between the cavity and CPB qubits driven by a detuning sweep.
pub fn run_swap(schedule: &PulseSchedule, params: &SystemParams) -> Result<GateReport> {
    run_swap_with(schedule, params, DEFAULT_MAX_PHASE)
}

pub fn run_swap_with(schedule: &PulseSchedule, params: &SystemParams, max_phase: f64) -> Result<GateReport> {
    check_sweep_endpoints(schedule, params.g_c)?;
    let evo = evolve_jc(schedule, params.g_c, max_phase)?;
    Ok(swap_report(&evo, params))
}

pub(crate) fn swap_report(evo: &JcEvolution, params: &SystemParams) -> GateReport {
    let mut r = two_qubit_report("swap", swap_target(), evo, params);
    r.population_transfer = Some(evo.block_a[(0, 1)].norm_sqr());
    let leak = evo.leakage_to_g2();
    if leak > WARNING_LEVEL {
        r.warnings.push(format!("leakage to |g,2> is {leak:.3e}"));
    }
    r
}

/// Conditional phase gate from a near-resonant detuning excursion.
pub fn run_cphase(schedule: &PulseSchedule, params: &SystemParams) -> Result<GateReport> {
    run_cphase_with(schedule, params, DEFAULT_MAX_PHASE)
}

pub fn run_cphase_with(schedule: &PulseSchedule, params: &SystemParams, max_phase: f64) -> Result<GateReport> {
    check_sweep_endpoints(schedule, params.g_c)?;
    let evo = evolve_jc(schedule, params.g_c, max_phase)?;
    Ok(cphase_report(&evo, params))
}

pub(crate) fn cphase_report(evo: &JcEvolution, params: &SystemParams) -> GateReport {
    let mut r = two_qubit_report("cphase", cz_target(), evo, params);
    let u = evo.computational();
    r.conditional_phase = Some(conditional_phase(&u));
    let lost = (0..4).map(|k| 1.0 - u[(k, k)].norm_sqr()).fold(0.0, f64::max);
    if lost > WARNING_LEVEL {
        r.warnings.push(format!("diagonal population loss {lost:.3e}; excursion is not adiabatic"));
    }
    r
}

/// Resonant microwave rotation of the CPB while the cavity is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    /// Rotation axis angle in the equatorial plane (0 = x, π/2 = y).
    pub axis_phase: f64,
    pub angle: f64,
    /// Drive Rabi frequency (rad/s).
    pub rabi: f64,
    /// CPB detuning from the cavity while the drive is applied (rad/s).
    pub delta_cpb: f64,
}

impl RotationSpec {
    pub fn x(angle: f64, delta_cpb: f64) -> Self {
        Self {
            axis_phase: 0.0,
            angle,
            rabi: 2.0 * PI * 100e6,
            delta_cpb,
        }
    }

    pub fn y(angle: f64, delta_cpb: f64) -> Self {
        Self {
            axis_phase: PI / 2.0,
            ..Self::x(angle, delta_cpb)
        }
    }

    pub fn duration(&self) -> f64 {
        if self.rabi > 0.0 {
            self.angle.abs() / self.rabi
        } else {
            0.0
        }
    }

    /// exp(−iθ n·σ/2) on (g, e).
    pub fn ideal(&self) -> DMatrix<C64> {
        let (s, c) = (self.angle / 2.0).sin_cos();
        let i = C64::new(0.0, 1.0);
        let (nx, ny) = (self.axis_phase.cos(), self.axis_phase.sin());
        // σ⁺ = |e⟩⟨g|; row/col order (g, e).
        DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(c, 0.0),
                -i * s * C64::new(nx, ny),
                -i * s * C64::new(nx, -ny),
                C64::new(c, 0.0),
            ],
        )
    }
}

/// Dressed CPB transition frequency in the single-excitation manifold.
pub fn dressed_cpb_frequency(g_c: f64, delta_cpb: f64) -> f64 {
    0.5 * delta_cpb + delta_cpb.signum() * (0.25 * delta_cpb * delta_cpb + g_c * g_c).sqrt()
}

/// exp(−iHt) for a Hermitian dense matrix.
pub fn expm_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let n = h.nrows();
    let phases = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * t)),
    ));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// CPB rotation simulated on (g0, g1, e0, e1, g2) in the frame rotating at
/// the drive frequency, which is tuned to the dressed CPB transition.
pub fn cpb_rotation(spec: &RotationSpec, params: &SystemParams) -> Result<GateReport> {
    if !(spec.angle.is_finite() && spec.rabi >= 0.0 && spec.delta_cpb.is_finite()) {
        return Err(invalid("rotation needs finite angle, non-negative Rabi and finite detuning"));
    }
    if spec.angle != 0.0 && spec.rabi == 0.0 {
        return Err(invalid("non-zero rotation needs a drive"));
    }
    let g = params.g_c;
    let wd = if spec.delta_cpb == 0.0 { 0.0 } else { dressed_cpb_frequency(g, spec.delta_cpb) };
    // Indices: g0=0, g1=1, e0=2, e1=3, g2=4. Frame removes wd per excitation.
    let mut h = DMatrix::<C64>::zeros(5, 5);
    let r = |x: f64| C64::new(x, 0.0);
    let exc = [0.0, 1.0, 1.0, 2.0, 2.0];
    let cpb = [0.0, 0.0, 1.0, 1.0, 0.0];
    for k in 0..5 {
        h[(k, k)] = r(spec.delta_cpb * cpb[k] - wd * exc[k]);
    }
    h[(1, 2)] = r(g);
    h[(2, 1)] = r(g);
    let s2 = 2f64.sqrt() * g;
    h[(3, 4)] = r(s2);
    h[(4, 3)] = r(s2);
    // Drive Ω/2 (e^{-iφ}σ⁺ + h.c.): g0→e0 and g1→e1.
    // A negative angle is the positive rotation about the opposite axis.
    let phase = if spec.angle < 0.0 { spec.axis_phase + PI } else { spec.axis_phase };
    let drive = C64::from_polar(0.5 * spec.rabi, -phase);
    for (from, to) in [(0usize, 2usize), (1, 3)] {
        h[(to, from)] = drive;
        h[(from, to)] = drive.conj();
    }
    let t = spec.duration();
    let u = expm_hermitian(&h, t);
    let sub = DMatrix::from_fn(2, 2, |a, b| {
        let idx = [0usize, 2usize];
        u[(idx[a], idx[b])]
    });
    let target = spec.ideal();
    let metrics = fidelity_metrics(&sub, &target);
    // Time-averaged excited population for inputs g and e.
    let p_e = {
        let samples = 64;
        let mut acc = 0.0;
        for k in 0..samples {
            let uk = expm_hermitian(&h, t * (k as f64 + 0.5) / samples as f64);
            for input in [0usize, 2] {
                acc += uk[(2, input)].norm_sqr() + uk[(3, input)].norm_sqr();
            }
        }
        acc / (2.0 * samples as f64)
    };
    let mut warnings = Vec::new();
    if g != 0.0 && (spec.delta_cpb / g).abs() < 10.0 {
        warnings.push(format!(
            "CPB detuning ratio {:.2} is below 10; cavity dressing is significant",
            (spec.delta_cpb / g).abs()
        ));
    }
    Ok(GateReport {
        target: format!("rot(phase={:.6}, angle={:.6})", spec.axis_phase, spec.angle),
        target_operator: complex_rows(&target),
        achieved_operator: complex_rows(&sub),
        frame: None,
        average_fidelity: metrics.average_fidelity,
        process_fidelity: metrics.process_fidelity,
        worst_case_infidelity: metrics.worst_case_infidelity,
        leakage: metrics.leakage,
        conditional_phase: None,
        population_transfer: None,
        duration: t,
        loss_estimate: params.gamma_cpb * p_e * t,
        warnings,
    })
}

/// Mean photon number of the readout probe.
pub const DEFAULT_PROBE_PHOTONS: f64 = 4.0;
/// Discrimination error above which readouts carry a warning.
pub const READOUT_TARGET_ERROR: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutReport {
    /// Dispersive pull g_c²/δ_CPB (rad/s).
    pub chi: f64,
    /// Accumulated conditional probe phase min(|χ|t, π/2).
    pub phase_separation: f64,
    /// Probability of assigning the wrong CPB state.
    pub discrimination_error: f64,
    pub probability_excited: f64,
    /// Probability that the recorded outcome is "e".
    pub probability_outcome_excited: f64,
    pub probe_duration: f64,
    pub warnings: Vec<String>,
}

/// Dispersive readout with a coherent probe of `n_photons` mean photons: the
/// two pointer states separated by phase 2θ overlap as exp(−4 n̄ sin²θ) and
/// are discriminated with the Helstrom error.
pub fn readout(
    probability_excited: f64,
    params: &SystemParams,
    delta_cpb: f64,
    probe_duration: f64,
    n_photons: f64,
) -> Result<ReadoutReport> {
    if !(0.0..=1.0 + 1e-12).contains(&probability_excited) {
        return Err(invalid("excited-state probability must lie in [0, 1]"));
    }
    if delta_cpb == 0.0 || !(probe_duration >= 0.0) || !(n_photons >= 0.0) {
        return Err(invalid("readout needs non-zero detuning and non-negative probe settings"));
    }
    let p = probability_excited.clamp(0.0, 1.0);
    let chi = params.g_c * params.g_c / delta_cpb;
    let theta = (chi.abs() * probe_duration).min(PI / 2.0);
    let overlap = (-4.0 * n_photons * theta.sin().powi(2)).exp();
    let eps = 0.5 * (1.0 - (1.0 - overlap).max(0.0).sqrt());
    let mut warnings = Vec::new();
    if eps > READOUT_TARGET_ERROR {
        warnings.push(format!(
            "probe of {probe_duration:.3e} s reaches discrimination error {eps:.3e} (target {READOUT_TARGET_ERROR:.0e})"
        ));
    }
    Ok(ReadoutReport {
        chi,
        phase_separation: theta,
        discrimination_error: eps,
        probability_excited: p,
        probability_outcome_excited: p * (1.0 - eps) + (1.0 - p) * eps,
        probe_duration,
        warnings,
    })
}

impl ReadoutReport {
    /// Samples one outcome; true means "e". Also returns the CPB state the
    /// measurement projected onto.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (bool, bool) {
        let projected_e = rng.random::<f64>() < self.probability_excited;
        let flip = rng.random::<f64>() < self.discrimination_error;
        (projected_e ^ flip, projected_e)
    }

    pub fn sample_shots<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Vec<bool> {
        (0..shots).map(|_| self.sample(rng).0).collect()
    }
}
