//! Simulation toolkit for nitrogen-vacancy (NV) color centers in diamond.
//!
//! The crate models the spin-selective photophysics of single NV defects and
//! the coherent control experiments built on top of them: optically detected
//! magnetic resonance (ODMR) with hyperfine structure, pulsed spin dynamics
//! and density-matrix tomography, measurement-induced (Zeno) decoherence,
//! single-shot readout statistics, photon antibunching, and photon-to-spin
//! storage in a lambda system.
//!
//! Organization:
//! - [`qops`]: dense complex linear algebra and open-system evolution for
//!   Hilbert spaces of dimension <= 16,
//! - [`nv`]: the NV level structure (spin Hamiltonian, optical rate model),
//! - [`odmr`]: CW ODMR and fluorescence-excitation spectra,
//! - [`pulse`]: pulse-sequence DSL, coherent evolution, Bell states, tomography,
//! - [`measurement`]: stochastic readout, telegraph traces, Zeno suppression,
//! - [`photonics`]: g2 correlations, EIT, dark polaritons,
//! - [`config`] / [`output`]: experiment configuration and CSV/JSON emission.

pub mod config;
pub mod measurement;
pub mod nv;
pub mod odmr;
pub mod output;
pub mod photonics;
pub mod pulse;
pub mod qops;
pub mod series;
pub mod units;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or input failed validation.
    #[error("{0}")]
    Invalid(String),
    /// A matrix expected to be Hermitian was not.
    #[error("operator is not Hermitian (max deviation {dev:.3e})")]
    NonHermitian { dev: f64 },
    /// Incompatible matrix / state dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// The requested integrator step violates the stability guard.
    #[error("time step too large for stable integration; use dt <= {recommended:.3e} s")]
    Unstable { recommended: f64 },
    /// Pulse-program syntax error with source position.
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    /// A linear system was singular (e.g. a disconnected rate graph).
    #[error("singular system: {0}")]
    Singular(String),
    /// A fit did not converge.
    #[error("fit failure: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
