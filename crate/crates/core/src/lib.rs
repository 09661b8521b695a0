//! Numerical experiments on orbits and stabilizers of learned features.
//!
//! * [`group`]: finite permutation actions and GL2(R) sampling.
//! * [`figures`]: plane figures, Hausdorff distances, rasterization.
//! * [`stabilizer`]: Monte Carlo eps-stabilizer volumes and random-walk hitting times.
//! * [`autoencoder`]: sigmoid autoencoders trained by SGD, stacked greedily.
//! * [`shadow`]: linear "shadow" maps and Jacobians of trained networks.
//! * [`moduli`]: generalized edges in the moduli space of plane segments.
//! * [`experiment`]: configuration, presets and artifact output for the CLI.

pub mod error;
pub mod experiment;
pub mod figures;
pub mod autoencoder;
pub mod group;
pub mod moduli;
pub mod shadow;
pub mod stabilizer;

pub use error::{Error, Result};
