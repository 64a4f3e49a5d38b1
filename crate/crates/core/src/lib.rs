//! Learnability bounds and order selection for linear-in-parameter models.
//!
//! A model of order `m` is fit by least squares on the first `m` columns of
//! a kernel design matrix. From the training error `r^MS` alone this crate
//! derives confidence intervals on the true risk `r^N`, the noise variance,
//! and the data length needed to reach a target accuracy, and uses the
//! upper bound to choose the order without held-out data.

pub mod bounds;
pub mod cv;
pub mod error;
pub mod linalg;
pub mod regression;
pub mod selection;
pub mod sim;

pub use bounds::{
    chebyshev_probability, d2nmse_upper, general_rn_bounds, is_learnable, rn_bounds_known_order,
    rn_bounds_via_mse_known_order, sample_complexity_known_order, validate_noise_variance,
    BoundMode, ConfidenceParams, Convention, NoiseVarianceRange, RiskBounds,
};
pub use cv::{kfold_select_order, CvReport};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use regression::{fit, Dataset, FitResult, KernelFamily, KernelSpec, OrderScan};
pub use selection::{
    epsilon_min, select_order, validate_order_cap, BoundaryVerdict, ExcludedOrder, SelectionReport,
    SigmaPolicy,
};
pub use sim::{ExperimentConfig, Manifest};
