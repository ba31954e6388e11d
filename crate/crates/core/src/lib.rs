//! Finite truncations of AF-algebra filtrations (Effros–Shen and UHF) equipped
//! with spectral-triple Lip-norms, plus numerical checks of how these finite
//! quantum metric spaces converge as the defining parameter varies.

pub mod cfrac;
pub mod convergence;
pub mod error;
pub mod fdca;
pub mod gns;
pub mod linalg;
pub mod spectral;
pub mod tower;

pub use error::{Error, Result};

/// Library version, echoed in CLI output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
