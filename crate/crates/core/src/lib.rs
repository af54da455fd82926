//! Simulation and pulse-optimization toolkit for a holographic molecular
//! quantum register coupled through a microwave cavity to a Cooper pair box.

pub mod collective;
pub mod dynamics;
pub mod error;
pub mod gates;
pub mod hilbert;
pub mod optctl;
pub mod oracle;
pub mod phasegeom;
pub mod protocol;
pub mod pulses;
pub mod sparse;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
