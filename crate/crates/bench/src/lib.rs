//! Shared fixtures for the benchmarks.

use mvhawkes::simulate::{relabel_uniform, simulate_target, stream_rng};
use mvhawkes::study::ansatz_truth;
use mvhawkes::{EventStream, MarkFunction, MarkPartition, MarkSpace, MvParams, SimConfig, TargetSpec};

/// Ground process with `λ0 = 1`, `α = 1`, `β = 2` (unnormalized kernel).
pub fn exponential_target() -> TargetSpec {
    TargetSpec::exponential_uniform_labels(1, 1.0, 1.0, 2.0).expect("valid target")
}

/// A stream of about `2·horizon` events relabelled uniformly on `1..=k`,
/// with its partition and the ansatz truth.
pub fn labelled_fixture(k: usize, horizon: f64) -> (MarkPartition, EventStream, MvParams) {
    let ground = simulate_target(&exponential_target(), &SimConfig::new(horizon, 1).expect("config"))
        .expect("simulation");
    let stream = relabel_uniform(&ground, k, &mut stream_rng(2, 0)).expect("relabel");
    let partition = MarkPartition::uniform(stream.space(), k).expect("partition");
    (partition, stream, ansatz_truth(k, 1.0, 1.0, 2.0).expect("truth"))
}

/// Continuous marks on `[0, 1]` with linear density, productivity and decay.
pub fn continuous_target() -> TargetSpec {
    TargetSpec::new(
        MarkSpace::unit_interval(),
        0.8,
        MarkFunction::polynomial(vec![0.5, 1.0]),
        MarkFunction::polynomial(vec![0.2, 0.4]),
        MarkFunction::polynomial(vec![1.0, 2.0]),
        mvhawkes::KernelConvention::Density,
    )
    .expect("valid target")
}
