//! Shared fixtures for the criterion benches.

use robust_tpp::em::FitConfig;
use robust_tpp::intensity::{BasisSpec, EventSequence, HorizonSpec};
use robust_tpp::simulate::{paper_design, ContaminationType, DesignKind, PaperDesign};

/// A small contaminated four-class dataset plus its fit configuration.
pub fn bench_dataset(n_per_class: usize) -> (Vec<EventSequence>, HorizonSpec, FitConfig) {
    let design = PaperDesign {
        kind: DesignKind::Nhpp,
        periods: 2,
        eta: 0.2,
        ctype: Some(ContaminationType::Omission),
        n_per_class,
        seed: 42,
    };
    let data = paper_design(&design).expect("bench dataset");
    let horizon = design.horizon();
    let basis = BasisSpec::gaussian(6, &horizon).expect("basis");
    let mut config = FitConfig::new(4, basis, horizon);
    config.seed = 43;
    config.max_iter = 50;
    (data, horizon, config)
}
