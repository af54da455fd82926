use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("angle for pattern order {n} is unreachable: |n*wavelength/length| = {ratio:.6} > 1")]
    UnreachableAngle { n: i64, ratio: f64 },

    #[error("register crosstalk |gram[{i}][{j}]| = {magnitude:.3e} exceeds tolerance {tolerance:.3e}")]
    RegisterConstruction {
        i: usize,
        j: usize,
        magnitude: f64,
        tolerance: f64,
    },

    #[error(
        "basis of {size} states exceeds budget of {budget} \
         (n_molecules={n_molecules}, n_max={n_max}, excitation_cap={excitation_cap})"
    )]
    Capacity {
        size: u128,
        budget: usize,
        n_molecules: usize,
        n_max: usize,
        excitation_cap: usize,
    },

    #[error("adiabaticity contract violated: endpoint detuning ratio {ratio:.3} < {required}")]
    Adiabaticity { ratio: f64, required: f64 },

    #[error("integration did not converge after {refinements} refinements (last change {change:.3e}, tolerance {tolerance:.3e})")]
    Integration {
        refinements: usize,
        change: f64,
        tolerance: f64,
    },

    #[error("frequency fit failed: {0}")]
    Fit(String),

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("compile error at gate {index} ({gate}): {reason}")]
    Compile {
        index: usize,
        gate: String,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
