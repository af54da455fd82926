//! Sampled control schedules: STIRAP pulse pairs, microwave transfer pulses
//! and Cooper-pair-box detuning sweeps.
//!
//! Every channel lives on the same strictly increasing time grid and is read
//! back with piecewise-linear interpolation, which is also what the CSV
//! round trip preserves exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phasegeom::WaveVector;

/// Named control channel. All values are angular frequencies in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Pump Rabi frequency on the m <-> e_el leg.
    Omega1,
    /// Stokes Rabi frequency on the f <-> e_el leg.
    Omega2,
    /// Classical microwave drive of the cavity Raman transition.
    OmegaMw,
    /// Two-photon Raman detuning of the cavity transfer.
    Delta,
    /// Cooper pair box detuning from the cavity.
    DeltaCpb,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Omega1,
        Channel::Omega2,
        Channel::OmegaMw,
        Channel::Delta,
        Channel::DeltaCpb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Omega1 => "omega1",
            Channel::Omega2 => "omega2",
            Channel::OmegaMw => "omega_mw",
            Channel::Delta => "delta",
            Channel::DeltaCpb => "delta_cpb",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid(format!("unknown channel `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct PulseSchedule {
    t_grid: Vec<f64>,
    channels: BTreeMap<Channel, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    t_grid: Vec<f64>,
    channels: BTreeMap<Channel, Vec<f64>>,
}

impl TryFrom<RawSchedule> for PulseSchedule {
    type Error = Error;
    fn try_from(raw: RawSchedule) -> Result<Self> {
        PulseSchedule::new(raw.t_grid, raw.channels)
    }
}

impl From<PulseSchedule> for RawSchedule {
    fn from(s: PulseSchedule) -> Self {
        RawSchedule {
            t_grid: s.t_grid,
            channels: s.channels,
        }
    }
}

impl PulseSchedule {
    pub fn new(t_grid: Vec<f64>, channels: BTreeMap<Channel, Vec<f64>>) -> Result<Self> {
        if t_grid.len() < 2 {
            return Err(invalid("schedule needs at least two samples"));
        }
        if t_grid.iter().any(|t| !t.is_finite()) {
            return Err(invalid("non-finite time sample"));
        }
        if t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("time grid must be strictly increasing"));
        }
        for (ch, values) in &channels {
            if values.len() != t_grid.len() {
                return Err(invalid(format!(
                    "channel {ch} has {} samples, grid has {}",
                    values.len(),
                    t_grid.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("channel {ch} has non-finite values")));
            }
        }
        Ok(Self { t_grid, channels })
    }

    /// Uniform grid of `n` samples on `[t0, t1]` with every channel given by a
    /// closure.
    pub fn from_fn(
        t0: f64,
        t1: f64,
        n: usize,
        channels: &[(Channel, &dyn Fn(f64) -> f64)],
    ) -> Result<Self> {
        let grid = uniform_grid(t0, t1, n)?;
        let map = channels
            .iter()
            .map(|(ch, f)| (*ch, grid.iter().map(|&t| f(t)).collect()))
            .collect();
        Self::new(grid, map)
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn t_start(&self) -> f64 {
        self.t_grid[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t_grid.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    pub fn channel(&self, ch: Channel) -> Option<&[f64]> {
        self.channels.get(&ch).map(Vec::as_slice)
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, &[f64])> {
        self.channels.iter().map(|(c, v)| (*c, v.as_slice()))
    }

    pub fn has(&self, ch: Channel) -> bool {
        self.channels.contains_key(&ch)
    }

    /// Piecewise-linear value of `ch` at `t`; absent channels read as zero and
    /// times outside the grid clamp to the end samples.
    pub fn value(&self, ch: Channel, t: f64) -> f64 {
        match self.channels.get(&ch) {
            Some(v) => interpolate(&self.t_grid, v, t),
            None => 0.0,
        }
    }

    /// Index `i` of the grid interval `[t_i, t_{i+1}]` that contains `t`.
    pub fn segment_of(&self, t: f64) -> usize {
        segment_index(&self.t_grid, t)
    }

    /// Same channels evaluated on a uniform grid with `n` samples.
    pub fn resample(&self, n: usize) -> Result<Self> {
        let grid = uniform_grid(self.t_start(), self.t_end(), n)?;
        let channels = self
            .channels
            .iter()
            .map(|(ch, v)| (*ch, grid.iter().map(|&t| interpolate(&self.t_grid, v, t)).collect()))
            .collect();
        Self::new(grid, channels)
    }

    /// Schedule played backwards in time on the same interval.
    pub fn time_reversed(&self) -> Self {
        let (t0, t1) = (self.t_start(), self.t_end());
        let grid: Vec<f64> = self.t_grid.iter().rev().map(|t| t0 + t1 - t).collect();
        let channels = self
            .channels
            .iter()
            .map(|(ch, v)| (*ch, v.iter().rev().copied().collect()))
            .collect();
        Self {
            t_grid: grid,
            channels,
        }
    }

    /// Shift the grid so the schedule starts at `t0`.
    pub fn shifted_to(&self, t0: f64) -> Self {
        let off = t0 - self.t_start();
        Self {
            t_grid: self.t_grid.iter().map(|t| t + off).collect(),
            channels: self.channels.clone(),
        }
    }

    pub fn with_channel(mut self, ch: Channel, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.t_grid.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("channel {ch} does not match grid")));
        }
        self.channels.insert(ch, values);
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.channels.keys().map(|c| c.name().to_string()));
        wr.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.t_grid.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.channels.values().map(|v| v[i].to_string()));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("t") {
            return Err(invalid("first CSV column must be `t`"));
        }
        let chans: Vec<Channel> = header
            .iter()
            .skip(1)
            .map(Channel::from_str)
            .collect::<Result<_>>()?;
        let mut grid = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); chans.len()];
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("CSV row {}: {e}", line + 2)))
            };
            grid.push(parse(&rec[0])?);
            for (k, col) in cols.iter_mut().enumerate() {
                col.push(parse(rec.get(k + 1).unwrap_or(""))?);
            }
        }
        Self::new(grid, chans.into_iter().zip(cols).collect())
    }
}

fn csv_err(e: csv::Error) -> Error {
    invalid(format!("csv: {e}"))
}

pub(crate) fn uniform_grid(t0: f64, t1: f64, n: usize) -> Result<Vec<f64>> {
    if !(t1 > t0) || n < 2 {
        return Err(invalid("grid needs t1 > t0 and at least two samples"));
    }
    let dt = (t1 - t0) / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|i| t0 + i as f64 * dt).collect();
    g[n - 1] = t1;
    Ok(g)
}

fn segment_index(grid: &[f64], t: f64) -> usize {
    let n = grid.len();
    match grid.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    }
}

fn interpolate(grid: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= grid[0] {
        return values[0];
    }
    if t >= grid[grid.len() - 1] {
        return values[values.len() - 1];
    }
    let i = segment_index(grid, t);
    let s = (t - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + s * (values[i + 1] - values[i])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StirapDirection {
    /// Stokes (Omega2) first: m -> f.
    Forward,
    /// Pump (Omega1) first: f -> m.
    Inverted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StirapSpec {
    /// Peak Rabi frequency of both beams (rad/s).
    pub peak_rabi: f64,
    /// Gaussian standard deviation of each envelope (s).
    pub pulse_width: f64,
    /// Separation of the two pulse centres (s).
    pub pulse_delay: f64,
    pub direction: StirapDirection,
    pub k1: WaveVector,
    pub k2: WaveVector,
}

impl StirapSpec {
    /// Adiabatic-regime defaults for a 50 ns window.
    pub fn standard(direction: StirapDirection, k1: WaveVector, k2: WaveVector) -> Self {
        Self {
            peak_rabi: 2.0 * std::f64::consts::PI * 4.0e9,
            pulse_width: 5.0e-9,
            pulse_delay: 7.0e-9,
            direction,
            k1,
            k2,
        }
    }

    /// `peak_rabi * pulse_width`, the adiabaticity figure of merit.
    pub fn adiabaticity(&self) -> f64 {
        self.peak_rabi * self.pulse_width
    }

    pub fn inverted(&self) -> Self {
        let mut s = self.clone();
        s.direction = match self.direction {
            StirapDirection::Forward => StirapDirection::Inverted,
            StirapDirection::Inverted => StirapDirection::Forward,
        };
        s
    }
}

/// Default optical STIRAP window.
pub const STIRAP_WINDOW: f64 = 50e-9;

/// Gaussian pulse pair centred in `[t0, t1]`, counterintuitive for the
/// forward direction.
pub fn stirap_schedule(spec: &StirapSpec, t0: f64, t1: f64, n_samples: usize) -> Result<PulseSchedule> {
    if !(t1 > t0) {
        return Err(invalid("stirap window needs t1 > t0"));
    }
    if n_samples < 16 {
        return Err(invalid("stirap schedule needs at least 16 samples"));
    }
    if !(spec.pulse_width > 0.0) {
        return Err(invalid("pulse_width must be positive"));
    }
    if spec.pulse_delay.abs() >= t1 - t0 {
        return Err(invalid("pulse_delay must be shorter than the window"));
    }
    if !(spec.peak_rabi >= 0.0) {
        return Err(invalid("peak_rabi must be non-negative"));
    }
    let mid = 0.5 * (t0 + t1);
    let half = 0.5 * spec.pulse_delay;
    let (c1, c2) = match spec.direction {
        StirapDirection::Forward => (mid + half, mid - half),
        StirapDirection::Inverted => (mid - half, mid + half),
    };
    let w = spec.pulse_width;
    let amp = spec.peak_rabi;
    let gauss = |c: f64| move |t: f64| amp * (-(t - c).powi(2) / (2.0 * w * w)).exp();
    let p1 = gauss(c1);
    let p2 = gauss(c2);
    PulseSchedule::from_fn(
        t0,
        t1,
        n_samples,
        &[(Channel::Omega1, &p1), (Channel::Omega2, &p2)],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepShape {
    /// Monotone passage from -delta_far to +delta_far.
    Swap,
    /// Excursion from +delta_far toward delta_near and back.
    Cphase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub shape: SweepShape,
    /// Endpoint detuning magnitude (rad/s).
    pub delta_far: f64,
    /// Closest approach to resonance for the cphase shape (rad/s).
    pub delta_near: f64,
    /// tanh steepness; larger values give sharper ramps.
    pub steepness: f64,
    pub duration: f64,
}

/// Minimum endpoint ratio |delta_CPB| / g_c accepted for a sweep.
pub const MIN_ENDPOINT_RATIO: f64 = 10.0;

impl SweepSpec {
    pub fn swap(delta_far: f64, duration: f64) -> Self {
        Self {
            shape: SweepShape::Swap,
            delta_far,
            delta_near: 0.0,
            steepness: 3.0,
            duration,
        }
    }

    pub fn cphase(delta_far: f64, delta_near: f64, duration: f64) -> Self {
        Self {
            shape: SweepShape::Cphase,
            delta_far,
            delta_near,
            steepness: 8.0,
            duration,
        }
    }
}

pub fn check_endpoint_ratio(delta: f64, g_c: f64) -> Result<()> {
    let ratio = if g_c == 0.0 { f64::INFINITY } else { delta.abs() / g_c.abs() };
    if ratio < MIN_ENDPOINT_RATIO {
        return Err(Error::Adiabaticity {
            ratio,
            required: MIN_ENDPOINT_RATIO,
        });
    }
    Ok(())
}

/// CPB detuning sweep on `[0, duration]`.
pub fn sweep_schedule(spec: &SweepSpec, g_c: f64, n_samples: usize) -> Result<PulseSchedule> {
    check_endpoint_ratio(spec.delta_far, g_c)?;
    if !(spec.duration > 0.0) || !(spec.steepness > 0.0) {
        return Err(invalid("sweep needs positive duration and steepness"));
    }
    let big_t = spec.duration;
    let s = spec.steepness;
    let far = spec.delta_far.abs();
    let values: Box<dyn Fn(f64) -> f64> = match spec.shape {
        SweepShape::Swap => {
            let norm = s.tanh();
            Box::new(move |t: f64| far * (s * (2.0 * t / big_t - 1.0)).tanh() / norm)
        }
        SweepShape::Cphase => {
            let near = spec.delta_near;
            let bump = move |x: f64| 0.5 * ((s * (x - 0.25)).tanh() - (s * (x - 0.75)).tanh());
            let (b0, bmid) = (bump(0.0), bump(0.5));
            Box::new(move |t: f64| {
                let b = (bump(t / big_t) - b0) / (bmid - b0);
                far - (far - near) * b
            })
        }
    };
    let grid = uniform_grid(0.0, big_t, n_samples)?;
    let mut v: Vec<f64> = grid.iter().map(|&t| values(t)).collect();
    // pin endpoints exactly
    let n = v.len();
    match spec.shape {
        SweepShape::Swap => {
            v[0] = -far;
            v[n - 1] = far;
        }
        SweepShape::Cphase => {
            v[0] = far;
            v[n - 1] = far;
        }
    }
    PulseSchedule::new(grid, [(Channel::DeltaCpb, v)].into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> WaveVector {
        WaveVector::new(1.0, 0.0, 0.0)
    }

    #[test]
    fn forward_stirap_is_counterintuitive() {
        let spec = StirapSpec::standard(StirapDirection::Forward, k(), k());
        let s = stirap_schedule(&spec, 0.0, STIRAP_WINDOW, 501).unwrap();
        let argmax = |ch| {
            let v = s.channel(ch).unwrap();
            (0..v.len()).max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap()).unwrap()
        };
        assert!(argmax(Channel::Omega2) < argmax(Channel::Omega1));
        let inv = stirap_schedule(&spec.inverted(), 0.0, STIRAP_WINDOW, 501).unwrap();
        assert_eq!(inv.channel(Channel::Omega1).unwrap(), s.channel(Channel::Omega2).unwrap());
    }

    #[test]
    fn stirap_rejects_short_grids() {
        let spec = StirapSpec::standard(StirapDirection::Forward, k(), k());
        assert!(stirap_schedule(&spec, 0.0, 1e-8, 8).is_err());
        assert!(stirap_schedule(&spec, 1e-8, 0.0, 100).is_err());
    }

    #[test]
    fn cphase_sweep_is_symmetric_and_swap_crosses_zero() {
        let g = 2.0 * std::f64::consts::PI * 200e6;
        let c = sweep_schedule(&SweepSpec::cphase(20.0 * g, 0.5 * g, 10e-9), g, 201).unwrap();
        let v = c.channel(Channel::DeltaCpb).unwrap();
        assert_eq!(v[0], v[200]);
        for i in 0..=100 {
            assert!((v[i] - v[200 - i]).abs() <= 1e-6 * v[0].abs());
        }
        assert!((v[100] - 0.5 * g).abs() < 1e-6 * g);

        let s = sweep_schedule(&SweepSpec::swap(20.0 * g, 10e-9), g, 201).unwrap();
        let v = s.channel(Channel::DeltaCpb).unwrap();
        assert!(v[100].abs() < 1e-6 * g);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sweep_rejects_small_endpoint_ratio() {
        let g = 1.0;
        let err = sweep_schedule(&SweepSpec::swap(5.0, 1.0), g, 100).unwrap_err();
        assert!(matches!(err, Error::Adiabaticity { .. }));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = 2.0 * std::f64::consts::PI * 200e6;
        let s = sweep_schedule(&SweepSpec::swap(20.0 * g, 7e-9), g, 77).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = PulseSchedule::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn time_reversal_mirrors_values() {
        let s = PulseSchedule::from_fn(0.0, 1.0, 11, &[(Channel::Delta, &|t| t * t)]).unwrap();
        let r = s.time_reversed();
        for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert!((r.value(Channel::Delta, t) - s.value(Channel::Delta, 1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_monotone_grid() {
        let mut ch = BTreeMap::new();
        ch.insert(Channel::Delta, vec![0.0, 1.0, 2.0]);
        assert!(PulseSchedule::new(vec![0.0, 2.0, 1.0], ch).is_err());
    }
}
