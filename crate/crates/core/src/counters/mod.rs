//! Private release of the running Gram statistics.

mod accountant;
mod tree;

pub use accountant::{
    accountant_epsilon, calibrate_sigma, counter_rho, rho_for_half_budget, sensitivity_bounds,
    tree_depth, CounterCalibration, PrivacyBudget, PrivacyReport, SigmaMode,
};
pub use tree::{PSumNode, TreeCounter};
