//! Correlators and CHSH values from counts, Poisson bootstrap error bars and
//! the finite-statistics lower bound on S.

mod bell;
mod beta;
mod bootstrap;

pub use bell::{
    bell_confidence, e_from_counts, game_score, game_tally, s_from_counts, BellRunData,
    ConfidenceResult, SettingMap,
};
pub use beta::{inverse_reg_inc_beta, reg_inc_beta};
pub use bootstrap::{poisson_bootstrap, BootstrapResult, Resample};
