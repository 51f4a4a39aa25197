//! CSI feedback compression laboratory for beamformed MIMO-OFDM links.
//!
//! The crate models the full feedback loop of a sounding-based beamforming
//! system: a fading channel is sounded, the right singular vectors of each
//! subcarrier's channel matrix form a steering matrix, and that matrix is fed
//! back to the transmitter through one of several compression schemes:
//!
//! * `givens` - the baseline angle decomposition and scalar quantization,
//! * `kmeans` - vector-quantized codebooks over angles or raw matrix entries,
//! * `autoenc` - small feedforward autoencoders over per-subcarrier series.
//!
//! `kpi` reports feedback size, model sharing cost and multiplication counts
//! for each scheme, `linksim` measures packet error rates over a coded
//! MIMO-OFDM link, and `store` persists datasets, codebooks and models in
//! versioned binary formats. The `csilab` binary in `src/bin` wraps all of it
//! behind a small CLI (`cli` module).

pub mod autoenc;
pub mod bitio;
pub mod cbr;
pub mod channel;
pub mod cli;
pub mod codec;
pub mod error;
pub mod givens;
pub mod kmeans;
pub mod kpi;
pub mod linksim;
pub mod seedmix;
pub mod steering;
pub mod store;

pub use error::{Error, Result};
