//! Decay fits, dephasing extraction, parameter estimation and retarder
//! calibration.

mod decay;
mod estimate;
mod simplex;

pub use decay::{emg, extract_dephasing, fit_g2_decay, DecayFit, DephasingFit, Sample, FWHM_PER_SIGMA};
pub use estimate::{
    calibrate_retarder, estimate_params, predicted_rates, retardance, ParamEstimate, RateInputs,
    RetarderCalibration, RetarderPoint,
};
pub use simplex::{multistart, nelder_mead, Minimum, SimplexOptions};
