//! Reconstruction and certification of joint electron-photon quantum states
//! from coincidence measurement records.
//!
//! The crate covers the full analysis chain of a path/polarisation
//! entanglement experiment: raw detection-event processing ([`events`]),
//! measurement-operator construction from waveplate settings ([`polopt`]),
//! single-qubit maximum-likelihood tomography of scan data ([`mle`]),
//! Bayesian reconstruction of the joint density matrix by Markov chain Monte
//! Carlo ([`bayes`]), entanglement measures and coherence correction
//! ([`entangle`]), and a synthetic experiment generator used to validate
//! every stage against known ground truth ([`simkit`]).
//!
//! The joint Hilbert space is ordered electron-first throughout; see the
//! [`qmat`] module documentation for the basis convention.
//!
//! ```
//! use eptomo::bayes::{posterior_summary, run_chains, ChainConfig, ScalarFunctional, SummaryOptions};
//! use eptomo::polopt::WaveplateSetting;
//! use eptomo::simkit::{bloch_xz_state, model_state, simulate_counts, ExperimentTruth};
//!
//! // Ground truth: beams marked by photon states 121° apart on the Bloch
//! // sphere, then simulated coincidence counts at three analysis settings.
//! let half = 0.5_f64 * 121.0_f64.to_radians();
//! let rho = model_state(0.64, &bloch_xz_state(half), &bloch_xz_state(-half), 1.0, 1.0)?;
//! let mut truth = ExperimentTruth::new(rho);
//! truth.exposure_s = 2.0;
//! let settings: Vec<WaveplateSetting> = [(30.0, 28.0), (30.0, 95.0), (74.0, 80.0)]
//!     .into_iter()
//!     .map(|(q, h)| WaveplateSetting::new(q, h))
//!     .collect::<eptomo::Result<_>>()?;
//! let records = simulate_counts(&truth, &settings, 8)?;
//!
//! // Sample the posterior and certify entanglement.
//! let config = ChainConfig {
//!     n_chains: 2,
//!     n_iter: 3000,
//!     beta: 0.02,
//!     ..ChainConfig::default()
//! };
//! let samples = run_chains(&config, &records)?;
//! let min_pt = posterior_summary(&samples, ScalarFunctional::MinPtEig, &SummaryOptions::default())?;
//! assert!(min_pt.mean < 0.0, "entanglement: negative partial-transpose eigenvalue");
//! # Ok::<(), eptomo::Error>(())
//! ```

pub mod bayes;
pub mod cli;
pub mod config;
pub mod entangle;
mod error;
pub mod events;
pub mod mle;
pub mod polopt;
pub mod qmat;
pub mod simkit;

pub use error::{Error, ErrorClass, Result};

/// Formats a float with 17 significant digits, enough for exact f64 round trips.
pub(crate) fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}
