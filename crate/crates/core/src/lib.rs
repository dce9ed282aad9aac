//! Bell tests between a photon and a stored optical phonon: click-statistics
//! model, photon-number oracle, Monte-Carlo detector simulation, tag-stream
//! reduction, statistics and fitting.

pub mod analytic;
pub mod error;
pub mod fitting;
pub mod fock;
pub mod model;
pub mod sim;
pub mod stats;
pub mod tagproc;

pub use error::{Error, Result};
