//! Simulation of two-photon bit-flip error rejection with linear optics.
//!
//! An unknown polarization qubit is encoded into a two-photon code state by a
//! parity check at a polarizing beam splitter, sent through a noisy channel,
//! and decoded by a second parity check that discards single bit flips.
//!
//! Layers, bottom up:
//! - [`algebra`]: kets, operators and density matrices over small registers.
//! - [`bench`]: spatial modes, waveplates, PBS routing and coincidence post-selection.
//! - [`noise`]: Pauli and waveplate channels, Bell-diagonal sources, parity dephasing.
//! - [`protocol`]: encode / transmit / decode and the closed-form error law.
//! - [`montecarlo`]: trial-by-trial sampling with counter-based seeding.
//! - [`experiment`]: JSON configs, sweeps, CSV and plot-data output.

pub mod algebra;
pub mod bench;
pub mod error;
pub mod experiment;
pub mod montecarlo;
pub mod noise;
pub mod protocol;

pub use error::{Error, Result};
