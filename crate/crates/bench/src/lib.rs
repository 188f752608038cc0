//! Fixtures shared by the criterion targets.

use glome_core::simulate::sample_scenario;
use glome_core::{fit, Dataset, EmConfig, FitResult, Scenario};

pub use glome_core::simulate::ws_forward_params;

pub fn ws_data(n: usize) -> Dataset {
    sample_scenario(&Scenario::Ws, n, 7).expect("WS sample")
}

/// A two-component fit of WS data.
pub fn ws_fit(n: usize) -> (Dataset, FitResult) {
    let data = ws_data(n);
    let res = fit(&data, 2, &EmConfig { n_restarts: 1, seed: 7, ..EmConfig::default() }).expect("fit");
    (data, res)
}
