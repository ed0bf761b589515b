//! Metastability toolkit for mean-field interacting diffusions.
//!
//! The crate computes Cramér transforms of tilted single-site measures, the
//! macroscopic double-well Hamiltonian, Eyring–Kramers transition-time
//! predictions with their capacity bounds, and checks them against Monte Carlo
//! simulation of the particle system and exact small-N quadrature.

pub mod config;
pub mod cramer;
pub mod error;
pub mod exactsmall;
pub mod experiment;
pub mod expr;
pub mod kramers;
pub mod landscape;
pub mod laplace;
pub mod potentials;
pub mod quadrature;
pub mod simulate;

pub use cramer::{CramerPoint, CramerTransform, Cumulants, Regime, TiltedMoments};
pub use error::{KramersError, Result};
pub use kramers::{ek_prediction, KramersPrediction, LogValue};
pub use potentials::{check_assumption, AssumptionReport, PotentialSpec};
