//! Inputs shared by the kernel benchmarks.

use cone_core::rng::stream;
use cone_core::verify::fixtures::{level_function, unit_square};
use cone_core::{sample_eta, CylinderFunction, DiscreteMeasure, IntensityModel, TorusSpace};

pub const SEED: u64 = 7;

/// A gamma configuration on the unit square, truncated at `eps`.
pub fn gamma_measure(eps: f64) -> DiscreteMeasure {
    sample_eta(&IntensityModel::gamma(), &unit_square(), eps, &mut stream(&[SEED])).expect("valid sampler")
}

pub fn setup() -> (TorusSpace, IntensityModel, CylinderFunction) {
    (unit_square(), IntensityModel::gamma(), level_function())
}
