use std::path::PathBuf;

use avflow_core::tasks::{
    dataset_to_bytes, gen_specgrid, generate, load_dataset, TaskKind, TaskSpec,
};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn golden_file_loads_and_reserializes_identically() {
    let path = fixture("golden_points2d.bin");
    let ds = load_dataset(&path).unwrap();
    assert_eq!(ds.kind, TaskKind::Points2d);
    assert_eq!(ds.signal_dim, 2);
    assert_eq!(ds.snr_db, 5.0);
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.pairs[1].clean.data(), &[-1.25, 0.5]);
    assert_eq!(ds.pairs[2].noise.data(), &[-3.0, 0.0625]);
    assert_eq!(ds.pairs[0].noisy.data(), &[2.5, -0.25]);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(dataset_to_bytes(&ds).unwrap(), bytes);
}

#[test]
fn specgrid_snr_is_exact_per_pair() {
    let mut spec = TaskSpec::new(TaskKind::Specgrid, 7);
    spec.n_train = 1000;
    spec.n_test = 1;
    let pairs = gen_specgrid(&spec).unwrap();
    let mut mean = 0.0;
    for p in &pairs[..1000] {
        let snr = p.empirical_snr_db();
        assert!((snr - 5.0).abs() < 1e-9, "{snr}");
        mean += snr / 1000.0;
        assert_eq!(p.noisy, p.clean.add(&p.noise));
    }
    assert!((mean - 5.0).abs() < 1e-9);
}

#[test]
fn specgrid_structure() {
    let mut spec = TaskSpec::new(TaskKind::Specgrid, 8);
    spec.n_train = 200;
    for p in &gen_specgrid(&spec).unwrap() {
        let rows: Vec<usize> = (0..spec.freq_bins)
            .filter(|r| {
                p.clean.data()[r * spec.frames..(r + 1) * spec.frames]
                    .iter()
                    .any(|&v| v != 0.0)
            })
            .collect();
        assert!((1..=3).contains(&rows.len()));
        assert!(p.clean.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generation_is_a_pure_function_of_the_spec(
        seed in any::<u64>(),
        snr in -10.0f64..30.0,
        points in any::<bool>(),
    ) {
        let kind = if points { TaskKind::Points2d } else { TaskKind::Specgrid };
        let mut spec = TaskSpec::new(kind, seed);
        spec.snr_db = snr;
        spec.n_train = 12;
        spec.n_test = 4;
        let (a_train, a_test) = generate(&spec).unwrap();
        let (b_train, b_test) = generate(&spec).unwrap();
        prop_assert_eq!(dataset_to_bytes(&a_train).unwrap(), dataset_to_bytes(&b_train).unwrap());
        prop_assert_eq!(dataset_to_bytes(&a_test).unwrap(), dataset_to_bytes(&b_test).unwrap());
        for p in a_train.pairs.iter().chain(&a_test.pairs) {
            prop_assert!((p.empirical_snr_db() - snr).abs() < 1e-9);
        }
    }
}
