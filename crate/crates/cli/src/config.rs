use std::fmt;
use std::path::{Path, PathBuf};

use holoreg::hilbert::SystemParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Orthogonality,
    Enhancement,
    Stirap,
    Multiplex,
    Gates,
    Optimize,
    Budget,
    Endtoend,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Orthogonality => "orthogonality",
            Experiment::Enhancement => "enhancement",
            Experiment::Stirap => "stirap",
            Experiment::Multiplex => "multiplex",
            Experiment::Gates => "gates",
            Experiment::Optimize => "optimize",
            Experiment::Budget => "budget",
            Experiment::Endtoend => "endtoend",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Swap,
    Cphase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    Ideal,
    Optimized,
}

/// Top-level config file. Only the block named by `experiment` may appear.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub device: Device,
    pub orthogonality: Option<Orthogonality>,
    pub enhancement: Option<Enhancement>,
    pub stirap: Option<Stirap>,
    pub multiplex: Option<Multiplex>,
    pub gates: Option<Gates>,
    pub optimize: Option<Optimize>,
    pub budget: Option<Budget>,
    pub endtoend: Option<Endtoend>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Device {
    pub g_single_rad_per_s: f64,
    pub raman_detuning_rad_per_s: f64,
    pub omega_mw_rad_per_s: f64,
    pub g_c_rad_per_s: f64,
    pub kappa_rad_per_s: f64,
    pub t1_s: f64,
    pub t2_s: f64,
    /// Molecules in the ensemble that sets the collective cavity coupling.
    pub ensemble_molecules: f64,
}

impl Default for Device {
    fn default() -> Self {
        let p = SystemParams::reference();
        Self {
            g_single_rad_per_s: p.g_single,
            raman_detuning_rad_per_s: p.raman_detuning,
            omega_mw_rad_per_s: p.omega_mw,
            g_c_rad_per_s: p.g_c,
            kappa_rad_per_s: p.kappa,
            t1_s: p.t1(),
            t2_s: p.t2(),
            ensemble_molecules: 1e6,
        }
    }
}

impl Device {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            g_single: self.g_single_rad_per_s,
            raman_detuning: self.raman_detuning_rad_per_s,
            omega_mw: self.omega_mw_rad_per_s,
            g_c: self.g_c_rad_per_s,
            kappa: self.kappa_rad_per_s,
            gamma_cpb: 1.0 / self.t1_s,
            gamma_phi: 1.0 / self.t2_s,
        }
    }

    /// √N₀·g_eff.
    pub fn collective_coupling(&self) -> f64 {
        let p = self.params();
        self.ensemble_molecules.sqrt() * p.g_eff().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Orthogonality {
    pub trap_length_m: f64,
    pub wavelength_m: f64,
    pub lattice_sites: usize,
    pub order_min: i64,
    pub order_max: i64,
    pub random_sizes: Vec<usize>,
    pub random_trials: usize,
    pub random_half_span: i64,
    pub lattice_overlap_max: f64,
    pub slope_target: f64,
    pub slope_tolerance: f64,
    pub angle_max_deg: f64,
}

impl Default for Orthogonality {
    fn default() -> Self {
        Self {
            trap_length_m: 5e-3,
            wavelength_m: 500e-9,
            lattice_sites: 10_000,
            order_min: -50,
            order_max: 50,
            random_sizes: vec![100, 1000, 10_000, 100_000],
            random_trials: 20,
            random_half_span: 3,
            lattice_overlap_max: 1e-12,
            slope_target: -0.5,
            slope_tolerance: 0.1,
            angle_max_deg: 0.3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Enhancement {
    pub sizes: Vec<usize>,
    pub trap_length_m: f64,
    pub relative_tolerance: f64,
}

impl Default for Enhancement {
    fn default() -> Self {
        Self {
            sizes: vec![1, 2, 4, 9, 16],
            trap_length_m: 1e-3,
            relative_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stirap {
    pub n_molecules: usize,
    pub tolerance: f64,
    pub peak_rabi_rad_per_s: Option<f64>,
    pub pulse_width_s: Option<f64>,
    pub pulse_delay_s: Option<f64>,
    pub efficiency_min: f64,
    pub peak_excited_max: f64,
    pub adiabaticity_min: f64,
}

impl Default for Stirap {
    fn default() -> Self {
        Self {
            n_molecules: 8,
            tolerance: 1e-9,
            peak_rabi_rad_per_s: None,
            pulse_width_s: None,
            pulse_delay_s: None,
            efficiency_min: 0.999,
            peak_excited_max: 1e-3,
            adiabaticity_min: 10.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Multiplex {
    pub sizes: Vec<usize>,
    pub spectator_size: usize,
    pub spectator_fidelity_min: f64,
    pub deviation_slope_max: f64,
    pub naive_excited_min: f64,
}

impl Default for Multiplex {
    fn default() -> Self {
        Self {
            sizes: vec![4, 8, 12],
            spectator_size: 8,
            spectator_fidelity_min: 0.98,
            deviation_slope_max: -0.9,
            naive_excited_min: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gates {
    /// Endpoint detunings in units of g_c.
    pub swap_endpoint_ratio: f64,
    pub swap_duration_s: f64,
    pub cphase_endpoint_ratio: f64,
    pub cphase_closest_ratio: f64,
    pub cphase_duration_s: f64,
    pub samples: usize,
    pub swap_transfer_min: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            swap_endpoint_ratio: 20.0,
            swap_duration_s: 100e-9,
            cphase_endpoint_ratio: 20.0,
            cphase_closest_ratio: 0.5,
            cphase_duration_s: 10e-9,
            samples: 2001,
            swap_transfer_min: 0.99,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerBlock {
    pub evaluations: usize,
    pub knots: usize,
    pub swap_duration_s: f64,
    pub cphase_duration_s: f64,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        Self {
            evaluations: 5000,
            knots: 20,
            swap_duration_s: holoreg::optctl::DEFAULT_SWAP_DURATION,
            cphase_duration_s: holoreg::optctl::DEFAULT_CPHASE_DURATION,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Optimize {
    pub target: Target,
    pub optimizer: OptimizerBlock,
    pub infidelity_max: f64,
    pub phase_tolerance_rad: f64,
}

impl Default for Optimize {
    fn default() -> Self {
        Self {
            target: Target::Swap,
            optimizer: OptimizerBlock::default(),
            infidelity_max: 1e-4,
            phase_tolerance_rad: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationBlock {
    pub mode: CalibrationMode,
    pub optimizer: OptimizerBlock,
    /// Ensemble size of the STIRAP efficiency run.
    pub stirap_molecules: usize,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        Self {
            mode: CalibrationMode::Optimized,
            optimizer: OptimizerBlock::default(),
            stirap_molecules: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub n_qubits: usize,
    pub n_gates: usize,
    pub max_gates_search: usize,
    pub calibration: CalibrationBlock,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            n_qubits: 8,
            n_gates: 1000,
            max_gates_search: 100_000,
            calibration: CalibrationBlock::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endtoend {
    pub shots: usize,
    pub fidelity_min: f64,
    pub parity_min: f64,
    pub calibration: CalibrationBlock,
}

impl Default for Endtoend {
    fn default() -> Self {
        Self {
            shots: 1000,
            fidelity_min: 0.99,
            parity_min: 0.95,
            calibration: CalibrationBlock::default(),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

/// 1-based line of the first occurrence of `"key"` in the source.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

struct Checker<'a> {
    text: &'a str,
    path: &'a Path,
}

impl Checker<'_> {
    fn fail(&self, key: &str, message: String) -> ConfigError {
        ConfigError {
            path: self.path.to_path_buf(),
            line: line_of(self.text, key),
            column: None,
            message,
        }
    }

    fn positive(&self, key: &str, v: f64) -> Result<(), ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(self.fail(key, format!("`{key}` must be positive and finite, got {v}")))
        }
    }

    fn non_negative(&self, key: &str, v: f64) -> Result<(), ConfigError> {
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(self.fail(key, format!("`{key}` must be non-negative and finite, got {v}")))
        }
    }

    fn at_least(&self, key: &str, v: usize, min: usize) -> Result<(), ConfigError> {
        if v >= min {
            Ok(())
        } else {
            Err(self.fail(key, format!("`{key}` must be at least {min}, got {v}")))
        }
    }

    fn fraction(&self, key: &str, v: f64) -> Result<(), ConfigError> {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(self.fail(key, format!("`{key}` must lie in [0, 1], got {v}")))
        }
    }

    fn optimizer(&self, o: &OptimizerBlock) -> Result<(), ConfigError> {
        self.at_least("evaluations", o.evaluations, 100)?;
        self.at_least("knots", o.knots, 2)?;
        self.positive("swap_duration_s", o.swap_duration_s)?;
        self.positive("cphase_duration_s", o.cphase_duration_s)
    }

    fn calibration(&self, c: &CalibrationBlock) -> Result<(), ConfigError> {
        self.optimizer(&c.optimizer)?;
        self.at_least("stirap_molecules", c.stirap_molecules, 1)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        cfg.validate(text, path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    fn blocks(&self) -> [(Experiment, bool); 8] {
        [
            (Experiment::Orthogonality, self.orthogonality.is_some()),
            (Experiment::Enhancement, self.enhancement.is_some()),
            (Experiment::Stirap, self.stirap.is_some()),
            (Experiment::Multiplex, self.multiplex.is_some()),
            (Experiment::Gates, self.gates.is_some()),
            (Experiment::Optimize, self.optimize.is_some()),
            (Experiment::Budget, self.budget.is_some()),
            (Experiment::Endtoend, self.endtoend.is_some()),
        ]
    }

    fn validate(&self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let c = Checker { text, path };
        for (kind, present) in self.blocks() {
            if present && kind != self.experiment {
                return Err(c.fail(
                    kind.name(),
                    format!("block `{}` does not belong to experiment `{}`", kind.name(), self.experiment.name()),
                ));
            }
        }
        let d = &self.device;
        c.positive("g_single_rad_per_s", d.g_single_rad_per_s)?;
        c.positive("g_c_rad_per_s", d.g_c_rad_per_s)?;
        c.positive("omega_mw_rad_per_s", d.omega_mw_rad_per_s)?;
        c.non_negative("kappa_rad_per_s", d.kappa_rad_per_s)?;
        c.positive("t1_s", d.t1_s)?;
        c.positive("t2_s", d.t2_s)?;
        c.positive("ensemble_molecules", d.ensemble_molecules)?;
        if !(d.raman_detuning_rad_per_s.is_finite() && d.raman_detuning_rad_per_s != 0.0) {
            return Err(c.fail("raman_detuning_rad_per_s", "`raman_detuning_rad_per_s` must be finite and non-zero".into()));
        }
        match self.experiment {
            Experiment::Orthogonality => {
                let o = self.orthogonality.clone().unwrap_or_default();
                c.positive("trap_length_m", o.trap_length_m)?;
                c.positive("wavelength_m", o.wavelength_m)?;
                c.at_least("lattice_sites", o.lattice_sites, 2)?;
                if o.order_min >= o.order_max {
                    return Err(c.fail("order_min", "`order_min` must be below `order_max`".into()));
                }
                if o.random_sizes.len() < 2 || o.random_sizes.iter().any(|&n| n < 2) {
                    return Err(c.fail("random_sizes", "`random_sizes` needs at least two sizes of 2 or more".into()));
                }
                c.at_least("random_trials", o.random_trials, 1)?;
                if o.random_half_span < 1 {
                    return Err(c.fail("random_half_span", "`random_half_span` must be at least 1".into()));
                }
                c.positive("lattice_overlap_max", o.lattice_overlap_max)?;
                c.non_negative("slope_tolerance", o.slope_tolerance)?;
                c.positive("angle_max_deg", o.angle_max_deg)?;
            }
            Experiment::Enhancement => {
                let e = self.enhancement.clone().unwrap_or_default();
                if e.sizes.is_empty() || e.sizes.contains(&0) {
                    return Err(c.fail("sizes", "`sizes` must list positive ensemble sizes".into()));
                }
                c.positive("trap_length_m", e.trap_length_m)?;
                c.positive("relative_tolerance", e.relative_tolerance)?;
            }
            Experiment::Stirap => {
                let s = self.stirap.clone().unwrap_or_default();
                c.at_least("n_molecules", s.n_molecules, 1)?;
                c.positive("tolerance", s.tolerance)?;
                for (k, v) in [
                    ("peak_rabi_rad_per_s", s.peak_rabi_rad_per_s),
                    ("pulse_width_s", s.pulse_width_s),
                    ("pulse_delay_s", s.pulse_delay_s),
                ] {
                    if let Some(v) = v {
                        c.positive(k, v)?;
                    }
                }
                c.fraction("efficiency_min", s.efficiency_min)?;
                c.positive("peak_excited_max", s.peak_excited_max)?;
                c.non_negative("adiabaticity_min", s.adiabaticity_min)?;
            }
            Experiment::Multiplex => {
                let m = self.multiplex.clone().unwrap_or_default();
                if m.sizes.len() < 2 || m.sizes.iter().any(|&n| n < 3) {
                    return Err(c.fail("sizes", "`sizes` needs at least two ensemble sizes of 3 or more".into()));
                }
                c.at_least("spectator_size", m.spectator_size, 3)?;
                c.fraction("spectator_fidelity_min", m.spectator_fidelity_min)?;
                c.positive("naive_excited_min", m.naive_excited_min)?;
            }
            Experiment::Gates => {
                let g = self.gates.clone().unwrap_or_default();
                c.positive("swap_endpoint_ratio", g.swap_endpoint_ratio)?;
                c.positive("swap_duration_s", g.swap_duration_s)?;
                c.positive("cphase_endpoint_ratio", g.cphase_endpoint_ratio)?;
                c.non_negative("cphase_closest_ratio", g.cphase_closest_ratio)?;
                c.positive("cphase_duration_s", g.cphase_duration_s)?;
                c.at_least("samples", g.samples, 3)?;
                c.fraction("swap_transfer_min", g.swap_transfer_min)?;
            }
            Experiment::Optimize => {
                let o = self.optimize.clone().unwrap_or_default();
                c.optimizer(&o.optimizer)?;
                c.positive("infidelity_max", o.infidelity_max)?;
                c.positive("phase_tolerance_rad", o.phase_tolerance_rad)?;
            }
            Experiment::Budget => {
                let b = self.budget.clone().unwrap_or_default();
                c.at_least("n_qubits", b.n_qubits, 2)?;
                c.at_least("n_gates", b.n_gates, 1)?;
                c.at_least("max_gates_search", b.max_gates_search, 1)?;
                c.calibration(&b.calibration)?;
            }
            Experiment::Endtoend => {
                let e = self.endtoend.clone().unwrap_or_default();
                c.at_least("shots", e.shots, 1)?;
                c.fraction("fidelity_min", e.fidelity_min)?;
                c.fraction("parity_min", e.parity_min)?;
                c.calibration(&e.calibration)?;
            }
        }
        Ok(())
    }
}
