//! Ensemble geometry, phase-pattern wave vectors and the overlap (Gram)
//! matrix that decides how many patterns fit into one ensemble.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default register crosstalk tolerance.
pub const DEFAULT_CROSSTALK_TOL: f64 = 1e-2;

/// A wave vector in rad/m.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WaveVector(pub [f64; 3]);

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self([x, y, z])
    }

    pub fn dot(&self, x: &[f64; 3]) -> f64 {
        self.0[0] * x[0] + self.0[1] * x[1] + self.0[2] * x[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, o: WaveVector) -> WaveVector {
        WaveVector([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, o: WaveVector) -> WaveVector {
        WaveVector([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for WaveVector {
    type Output = WaveVector;
    fn mul(self, s: f64) -> WaveVector {
        WaveVector([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

fn unit(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid("axis must be a finite non-zero vector"));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleGeometry {
    positions: Vec<[f64; 3]>,
    trap_length: f64,
    axis: [f64; 3],
}

impl EnsembleGeometry {
    pub fn new(positions: Vec<[f64; 3]>, trap_length: f64, axis: [f64; 3]) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("geometry needs at least one position"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("positions must be finite"));
        }
        if !(trap_length > 0.0 && trap_length.is_finite()) {
            return Err(invalid("trap_length must be positive"));
        }
        let axis = unit(axis)?;
        let g = Self {
            positions,
            trap_length,
            axis,
        };
        let spread = g.axial_spread();
        if spread > trap_length * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "axial spread {spread:e} m exceeds trap length {trap_length:e} m"
            )));
        }
        Ok(g)
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn trap_length(&self) -> f64 {
        self.trap_length
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn axial_spread(&self) -> f64 {
        let (lo, hi) = self
            .positions
            .iter()
            .map(|p| dot(p, &self.axis))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z), hi.max(z)));
        hi - lo
    }

    /// Length over which the phase of an equidistant chain repeats: `N` times
    /// the nearest-neighbour spacing. Phase patterns whose axial wave numbers
    /// differ by multiples of `2π / pattern_length` are exactly orthogonal on
    /// such a chain.
    pub fn pattern_length(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            self.trap_length
        } else {
            self.axial_spread() * n as f64 / (n - 1) as f64
        }
    }

    /// Phase factors e^{i q·x_j} for every molecule.
    pub fn phases(&self, q: &WaveVector) -> Vec<C64> {
        self.positions.iter().map(|x| C64::from_polar(1.0, q.dot(x))).collect()
    }
}

/// `n` equidistant points spanning `trap_length` along `axis`, centred on the
/// origin.
pub fn make_lattice(n: usize, trap_length: f64, axis: [f64; 3]) -> Result<EnsembleGeometry> {
    if n == 0 {
        return Err(invalid("lattice needs n >= 1"));
    }
    if !(trap_length > 0.0) {
        return Err(invalid("trap_length must be positive"));
    }
    let a = unit(axis)?;
    let positions = (0..n)
        .map(|j| {
            let z = if n == 1 {
                0.0
            } else {
                -0.5 * trap_length + trap_length * j as f64 / (n - 1) as f64
            };
            [a[0] * z, a[1] * z, a[2] * z]
        })
        .collect();
    EnsembleGeometry::new(positions, trap_length, a)
}

/// `n` positions drawn uniformly along the axis within the trap.
pub fn random_uniform(n: usize, trap_length: f64, axis: [f64; 3], seed: u64) -> Result<EnsembleGeometry> {
    if n == 0 || !(trap_length > 0.0) {
        return Err(invalid("random geometry needs n >= 1 and positive length"));
    }
    let a = unit(axis)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-0.5 * trap_length, 0.5 * trap_length)
        .map_err(|e| invalid(e.to_string()))?;
    let positions = (0..n)
        .map(|_| {
            let z = dist.sample(&mut rng);
            [a[0] * z, a[1] * z, a[2] * z]
        })
        .collect();
    EnsembleGeometry::new(positions, trap_length, a)
}

/// Independent isotropic Gaussian displacement of every molecule.
pub fn jitter(geom: &EnsembleGeometry, sigma: f64, seed: u64) -> Result<EnsembleGeometry> {
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(geom.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let positions: Vec<[f64; 3]> = geom
        .positions
        .iter()
        .map(|p| {
            [
                p[0] + normal.sample(&mut rng),
                p[1] + normal.sample(&mut rng),
                p[2] + normal.sample(&mut rng),
            ]
        })
        .collect();
    let mut out = EnsembleGeometry {
        positions,
        trap_length: geom.trap_length,
        axis: geom.axis,
    };
    // jitter may push the end molecules past the nominal trap edge
    out.trap_length = out.trap_length.max(out.axial_spread());
    Ok(out)
}

/// `(1/N) Σ_j e^{i (q2 - q1)·x_j}`.
pub fn overlap(geom: &EnsembleGeometry, q1: &WaveVector, q2: &WaveVector) -> C64 {
    let dq = *q2 - *q1;
    let n = geom.len();
    let sum: C64 = if n > 50_000 {
        geom.positions
            .par_chunks(8192)
            .map(|c| c.iter().map(|x| C64::from_polar(1.0, dq.dot(x))).sum::<C64>())
            .sum()
    } else {
        geom.positions.iter().map(|x| C64::from_polar(1.0, dq.dot(x))).sum()
    };
    sum / n as f64
}

/// Incidence angles θ_n = arcsin(n λ / L) for n in `[n_min, n_max]`.
pub fn angle_schedule(trap_length: f64, wavelength: f64, n_min: i64, n_max: i64) -> Result<Vec<f64>> {
    if !(trap_length > 0.0) || !(wavelength > 0.0) {
        return Err(invalid("trap_length and wavelength must be positive"));
    }
    if n_min > n_max {
        return Err(invalid("n_min must not exceed n_max"));
    }
    (n_min..=n_max)
        .map(|n| {
            let ratio = n as f64 * wavelength / trap_length;
            if ratio.abs() > 1.0 {
                Err(Error::UnreachableAngle { n, ratio })
            } else {
                Ok(ratio.asin())
            }
        })
        .collect()
}

/// Register of K phase-pattern modes q_i = k1 - k2_i together with their
/// pairwise overlaps.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeRegister {
    k1: WaveVector,
    angles: Vec<f64>,
    modes: Vec<WaveVector>,
    gram: Vec<C64>,
    crosstalk_bound: f64,
}

impl ModeRegister {
    /// Evaluates the register without enforcing a crosstalk tolerance.
    pub fn evaluate(geom: &EnsembleGeometry, k1: WaveVector, angles: &[f64]) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("register needs at least one angle"));
        }
        if !k1.is_finite() || angles.iter().any(|a| !a.is_finite()) {
            return Err(invalid("k1 and angles must be finite"));
        }
        for (i, a) in angles.iter().enumerate() {
            if angles[..i].contains(a) {
                return Err(invalid(format!("duplicate angle {a}")));
            }
        }
        let k = k1.norm();
        if !(k > 0.0) {
            return Err(invalid("k1 must be non-zero"));
        }
        let axis = geom.axis();
        let k1_hat = [k1.0[0] / k, k1.0[1] / k, k1.0[2] / k];
        if dot(&k1_hat, &axis).abs() > 1e-9 {
            return Err(invalid("k1 must be perpendicular to the trap axis"));
        }
        let modes: Vec<WaveVector> = angles
            .iter()
            .map(|&th| {
                let (s, c) = th.sin_cos();
                let k2 = WaveVector([
                    k * (c * k1_hat[0] + s * axis[0]),
                    k * (c * k1_hat[1] + s * axis[1]),
                    k * (c * k1_hat[2] + s * axis[2]),
                ]);
                k1 - k2
            })
            .collect();
        let gram = gram_matrix(geom, &modes);
        let kk = modes.len();
        let mut bound = 0.0f64;
        for i in 0..kk {
            for j in (i + 1)..kk {
                bound = bound.max(gram[i * kk + j].norm());
            }
        }
        Ok(Self {
            k1,
            angles: angles.to_vec(),
            modes,
            gram,
            crosstalk_bound: bound,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn k1(&self) -> WaveVector {
        self.k1
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> WaveVector {
        self.modes[i]
    }

    /// Stokes wave vector k2_i = k1 - q_i that addresses mode `i`.
    pub fn k2(&self, i: usize) -> WaveVector {
        self.k1 - self.modes[i]
    }

    pub fn gram(&self, i: usize, j: usize) -> C64 {
        self.gram[i * self.modes.len() + j]
    }

    pub fn crosstalk_bound(&self) -> f64 {
        self.crosstalk_bound
    }

    /// Largest off-diagonal entry and its position.
    pub fn worst_pair(&self) -> Option<(usize, usize, f64)> {
        let k = self.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..k {
            for j in (i + 1)..k {
                let m = self.gram(i, j).norm();
                if best.map_or(true, |b| m > b.2) {
                    best = Some((i, j, m));
                }
            }
        }
        best
    }

    pub fn to_doc(&self) -> RegisterDoc {
        RegisterDoc {
            k1: self.k1,
            angles_deg: self.angles.iter().map(|a| a.to_degrees()).collect(),
            modes: self.modes.clone(),
            gram: self.gram.iter().map(|c| [c.re, c.im]).collect(),
            crosstalk_bound: self.crosstalk_bound,
        }
    }
}

/// JSON form of a register; the Gram matrix is row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterDoc {
    pub k1: WaveVector,
    pub angles_deg: Vec<f64>,
    pub modes: Vec<WaveVector>,
    pub gram: Vec<[f64; 2]>,
    pub crosstalk_bound: f64,
}

/// Builds the register and fails if any pair overlaps by more than `tol`.
pub fn build_register(
    geom: &EnsembleGeometry,
    k1: WaveVector,
    angles: &[f64],
    tol: f64,
) -> Result<ModeRegister> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid("tolerance must lie in (0, 1)"));
    }
    let reg = ModeRegister::evaluate(geom, k1, angles)?;
    if let Some((i, j, m)) = reg.worst_pair() {
        if m > tol {
            return Err(Error::RegisterConstruction {
                i,
                j,
                magnitude: m,
                tolerance: tol,
            });
        }
    }
    Ok(reg)
}

/// Hermitian Gram matrix (row-major) with an exact unit diagonal.
pub fn gram_matrix(geom: &EnsembleGeometry, modes: &[WaveVector]) -> Vec<C64> {
    let k = modes.len();
    let n = geom.len() as f64;
    let phases: Vec<Vec<C64>> = modes.par_iter().map(|q| geom.phases(q)).collect();
    let upper: Vec<(usize, usize, C64)> = (0..k)
        .into_par_iter()
        .flat_map_iter(|i| {
            let phases = &phases;
            ((i + 1)..k).map(move |j| {
                let s: C64 = phases[i]
                    .iter()
                    .zip(&phases[j])
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                (i, j, s / n)
            })
        })
        .collect();
    let mut g = vec![C64::new(0.0, 0.0); k * k];
    for i in 0..k {
        g[i * k + i] = C64::new(1.0, 0.0);
    }
    for (i, j, v) in upper {
        g[i * k + j] = v;
        g[j * k + i] = v.conj();
    }
    g
}

/// Median |overlap| between distinct schedule modes over random uniform
/// chains of `n` molecules. Orders `-half_span..=half_span` are used.
pub fn median_random_overlap(
    n: usize,
    trap_length: f64,
    wavelength: f64,
    half_span: i64,
    seeds: &[u64],
) -> Result<f64> {
    let angles = angle_schedule(trap_length, wavelength, -half_span, half_span)?;
    let k = 2.0 * PI / wavelength;
    let mut all: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let geom = random_uniform(n, trap_length, [0.0, 0.0, 1.0], seed)?;
            let reg = ModeRegister::evaluate(&geom, WaveVector::new(k, 0.0, 0.0), &angles)?;
            let kk = reg.len();
            let mut v = Vec::with_capacity(kk * (kk - 1) / 2);
            for i in 0..kk {
                for j in (i + 1)..kk {
                    v.push(reg.gram(i, j).norm());
                }
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(median(&mut all))
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    #[test]
    fn lattice_examples() {
        let g = make_lattice(1, 5e-3, Z).unwrap();
        assert_eq!(g.positions(), &[[0.0, 0.0, 0.0]]);
        let g = make_lattice(2, 1.0, Z).unwrap();
        assert_eq!(g.positions(), &[[0.0, 0.0, -0.5], [0.0, 0.0, 0.5]]);
        let g = make_lattice(10_000, 5e-3, Z).unwrap();
        let d = g.positions()[1][2] - g.positions()[0][2];
        assert!((d - 5e-3 / 9_999.0).abs() < 1e-18);
        assert!(make_lattice(0, 1.0, Z).is_err());
        assert!(make_lattice(3, 0.0, Z).is_err());
        assert!(make_lattice(3, -1.0, Z).is_err());
    }

    #[test]
    fn jitter_contract() {
        let g = make_lattice(50, 1e-3, Z).unwrap();
        assert_eq!(jitter(&g, 0.0, 7).unwrap(), g);
        assert_eq!(jitter(&g, 1e-7, 7).unwrap(), jitter(&g, 1e-7, 7).unwrap());
        assert_ne!(jitter(&g, 1e-7, 7).unwrap(), jitter(&g, 1e-7, 8).unwrap());
        assert!(jitter(&g, -1.0, 7).is_err());
    }

    #[test]
    fn geometric_series_zero() {
        let n = 64;
        let g = make_lattice(n, 1.0, Z).unwrap();
        let d = g.pattern_length();
        for m in 1..n as i64 {
            let q = WaveVector::new(0.0, 0.0, 2.0 * PI * m as f64 / d);
            assert!(overlap(&g, &WaveVector::ZERO, &q).norm() < 1e-13, "m = {m}");
        }
        let q = WaveVector::new(0.0, 0.0, 2.0 * PI * n as f64 / d);
        assert!((overlap(&g, &WaveVector::ZERO, &q).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angle_schedule_examples() {
        let a = angle_schedule(5e-3, 500e-9, 0, 0).unwrap();
        assert_eq!(a, vec![0.0]);
        let a = angle_schedule(5e-3, 500e-9, 50, 50).unwrap();
        assert!((a[0].to_degrees() - 0.286_480).abs() < 1e-5);
        let a = angle_schedule(5e-3, 500e-9, -50, 50).unwrap();
        assert_eq!(a.len(), 101);
        assert!(a.iter().all(|t| t.abs().to_degrees() <= 0.3));
        let e = angle_schedule(1e-6, 500e-9, 0, 3).unwrap_err();
        assert!(matches!(e, Error::UnreachableAngle { n: 3, .. }));
    }

    #[test]
    fn single_angle_register() {
        let g = make_lattice(10, 1e-3, Z).unwrap();
        let r = build_register(&g, WaveVector::new(1e7, 0.0, 0.0), &[0.0], 1e-2).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.gram(0, 0), C64::new(1.0, 0.0));
        assert_eq!(r.crosstalk_bound(), 0.0);
    }

    #[test]
    fn register_reports_worst_pair() {
        let g = make_lattice(10, 1e-3, Z).unwrap();
        let err = build_register(&g, WaveVector::new(1e7, 0.0, 0.0), &[0.0, 1e-6], 1e-2).unwrap_err();
        assert!(matches!(err, Error::RegisterConstruction { i: 0, j: 1, .. }));
        assert!(build_register(&g, WaveVector::new(1e7, 0.0, 0.0), &[0.0, 0.0], 1e-2).is_err());
        assert!(build_register(&g, WaveVector::new(0.0, 0.0, 1e7), &[0.0], 1e-2).is_err());
    }

    #[test]
    fn register_json_has_row_major_gram() {
        let g = make_lattice(20, 1e-3, Z).unwrap();
        let angles = angle_schedule(g.pattern_length(), 500e-9, -1, 1).unwrap();
        let k = 2.0 * std::f64::consts::PI / 500e-9;
        let r = build_register(&g, WaveVector::new(k, 0.0, 0.0), &angles, 1e-2).unwrap();
        let doc = r.to_doc();
        assert_eq!(doc.gram.len(), 9);
        assert_eq!(doc.gram[4], [1.0, 0.0]);
        let s = serde_json::to_string(&doc).unwrap();
        let back: RegisterDoc = serde_json::from_str(&s).unwrap();
        assert_eq!(back, doc);
    }

    fn geometry() -> impl Strategy<Value = EnsembleGeometry> {
        prop::collection::vec(-1e-3..1e-3f64, 1..40).prop_map(|zs| {
            let pos: Vec<[f64; 3]> = zs.iter().map(|&z| [0.0, 0.0, z]).collect();
            EnsembleGeometry::new(pos, 2e-3, Z).unwrap()
        })
    }

    fn wave() -> impl Strategy<Value = WaveVector> {
        (-1e5..1e5f64, -1e5..1e5f64, -1e5..1e5f64).prop_map(|(x, y, z)| WaveVector::new(x, y, z))
    }

    proptest! {
        #[test]
        fn overlap_properties(g in geometry(), q1 in wave(), q2 in wave()) {
            prop_assert!((overlap(&g, &q1, &q1) - C64::new(1.0, 0.0)).norm() < 1e-12);
            let a = overlap(&g, &q1, &q2);
            let b = overlap(&g, &q2, &q1);
            prop_assert!((a - b.conj()).norm() < 1e-12);
            prop_assert!(a.norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn gram_is_hermitian(g in geometry(), qs in prop::collection::vec(wave(), 1..6)) {
            let gm = gram_matrix(&g, &qs);
            let k = qs.len();
            for i in 0..k {
                prop_assert_eq!(gm[i * k + i], C64::new(1.0, 0.0));
                for j in 0..k {
                    prop_assert!((gm[i * k + j] - gm[j * k + i].conj()).norm() < 1e-12);
                }
            }
        }
    }
}
