//! Shared inputs for the benchmarks.

use cml_extremes::lattice::MapSpec;
use cml_extremes::{ObservableSeries, ObservableSpec, TrajectoryConfig};

/// Deterministic trajectory config for the tripling map.
pub fn tripling_config(n: usize, gamma: f64, length: usize) -> TrajectoryConfig {
    let map = MapSpec::tripling(n, gamma).expect("valid lattice");
    TrajectoryConfig::new(map, length).with_seed(7, 0)
}

/// Global synchronization series of the given length.
pub fn sync_series(n: usize, gamma: f64, length: usize) -> ObservableSeries {
    ObservableSeries::generate(&tripling_config(n, gamma, length), &ObservableSpec::GlobalSync)
        .expect("series")
}
