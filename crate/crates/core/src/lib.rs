//! Block-rotated preambles (BRPs) and carrier-frequency-offset estimation for
//! two-way amplify-and-forward relaying.
//!
//! The crate is organised along the signal chain:
//!
//! - [`preamble`]: CAZAC basis blocks, BRP assembly, the degradation function
//!   and the block-rotation-angle optimisation.
//! - [`channel`]: multipath channel sampling, the two-phase relay exchange in
//!   the time domain and the equivalent block model seen by source S1.
//! - [`crb`]: genie-aided, modified and approximate Cramer-Rao bounds, plus a
//!   full-FIM oracle.
//! - [`estimation`]: the CRB-preserving blockwise filter, the lag-one
//!   correlator and the genie-aided maximum-likelihood estimator.
//! - [`experiments`]: seeded, thread-count independent Monte Carlo sweeps and
//!   the CSV tables consumed by plotting tools.
//!
//! All frequencies are normalised (cycles per sample) and both noise
//! variances are one, so the per-source transmit power equals the linear SNR.

pub mod channel;
pub mod crb;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod preamble;

pub use channel::{BlockModel, ChannelRealization, SimRng, SystemConfig};
pub use crb::{CrbInputs, CrbReport, GammaEstimate};
pub use error::{Error, Result};
pub use estimation::{EstimateMethod, EstimateResult, FilterSpec, MleInput, MleOptions};
pub use experiments::{ExperimentConfig, PreambleMode, SweepResult, SweepRow};
pub use preamble::{AngleMethod, AngleSolution, BasisBlock, BrpSpec};

pub use nalgebra;
pub use num_complex::Complex64;
