//! Shared fixtures for the benchmarks.

use avflow_core::flowcore::TimePair;
use avflow_core::netmodel::{init, ModelParams, NetConfig};
use avflow_core::tasks::{generate, TaskKind, TaskSpec};
use avflow_core::training::StepInputs;
use avflow_core::Tensor;

/// A freshly initialised network and one specgrid batch of `batch` rows.
pub fn specgrid_fixture(batch: usize, width: usize) -> (ModelParams, StepInputs) {
    let spec = TaskSpec {
        n_train: batch,
        n_test: 1,
        ..TaskSpec::new(TaskKind::Specgrid, 0)
    };
    let (train, _) = generate(&spec).expect("specgrid fixture");
    let net = NetConfig {
        signal_dim: train.signal_dim,
        hidden_width: width,
        hidden_layers: 3,
        n_frequencies: 16,
    };
    let params = init(net, 0).expect("network");
    let idx: Vec<usize> = (0..batch).collect();
    let clean = train.batch(&idx, |p| &p.clean);
    let prior = Tensor::new(
        clean.shape().to_vec(),
        (0..clean.len()).map(|i| ((i * 7919) % 97) as f64 / 48.5 - 1.0).collect(),
    )
    .expect("prior");
    let inputs = StepInputs {
        clean,
        noisy: train.batch(&idx, |p| &p.noisy),
        prior,
        times: TimePair::new(0.8, 0.2, 0.5).expect("times"),
    };
    (params, inputs)
}
