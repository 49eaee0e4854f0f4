use avflow_core::flowcore::{interpolate, ExactOracle, OracleField, TimePair, VelocityModel};
use avflow_core::netmodel::{init, ModelParams, NetConfig};
use avflow_core::numkit::Tensor;
use avflow_core::tasks::{Dataset, SignalPair, TaskKind};
use avflow_core::training::{
    cfm_target, composition_target, composition_target_split, meanflow_fd_target, meanflow_jvp_target,
    replay_time_pairs, step_gradient, train, Objective, StepInputs, TrainConfig, Trainer,
};
use avflow_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn small_net(dim: usize) -> NetConfig {
    NetConfig {
        signal_dim: dim,
        hidden_width: 8,
        hidden_layers: 2,
        n_frequencies: 3,
    }
}

fn randn(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn batch(seed: u64, b: usize, d: usize, times: TimePair) -> StepInputs {
    let mut rng = seeded_rng(seed, 77);
    let clean = randn(&mut rng, &[b, d]);
    let noisy = clean.add(&randn(&mut rng, &[b, d]).scale(0.5));
    StepInputs {
        clean,
        noisy,
        prior: randn(&mut rng, &[b, d]),
        times,
    }
}

/// A 1-D task whose clean value is a fixed affine function of the mixture.
fn linear_task(n: usize) -> Dataset {
    let mut rng = seeded_rng(11, 0);
    let pairs = (0..n)
        .map(|_| {
            let c: f64 = 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal);
            SignalPair::new(Tensor::from_vec(vec![c]), Tensor::from_vec(vec![0.25 * c]), 12.0).unwrap()
        })
        .collect();
    Dataset {
        kind: TaskKind::Points2d,
        signal_dim: 1,
        snr_db: 12.0,
        pairs,
    }
}

fn random_task(n: usize, d: usize) -> Dataset {
    let mut rng = seeded_rng(5, 0);
    let pairs = (0..n)
        .map(|_| SignalPair::new(randn(&mut rng, &[d]), randn(&mut rng, &[d]).scale(0.3), 10.0).unwrap())
        .collect();
    Dataset {
        kind: TaskKind::Specgrid,
        signal_dim: d,
        snr_db: 10.0,
        pairs,
    }
}

/// Loss of the prediction against a target frozen at `frozen`'s values,
/// recomputed in plain arithmetic.
fn frozen_loss(params: &ModelParams, inputs: &StepInputs, target: &Tensor, cfg: &TrainConfig) -> f64 {
    let x = interpolate(&inputs.clean, &inputs.prior, inputs.times.t1()).unwrap().value;
    let pred = params
        .forward(&x, inputs.times.t1(), inputs.times.t2(), &inputs.noisy)
        .unwrap();
    let a = cfg.adaptive;
    let rows = pred.rows();
    (0..rows)
        .map(|i| {
            let s = pred.row(i).sub(&target.row(i)).norm_sq();
            s.powf(a.gamma) / (s + a.c).powf(a.p)
        })
        .sum::<f64>()
        / rows as f64
}

fn target_of(params: &ModelParams, inputs: &StepInputs, objective: Objective) -> Tensor {
    let (t1, t2) = (inputs.times.t1(), inputs.times.t2());
    let x = interpolate(&inputs.clean, &inputs.prior, t1).unwrap().value;
    match objective {
        Objective::Cfm => cfm_target(&inputs.clean, &inputs.prior).unwrap(),
        Objective::MeanflowJvp => {
            meanflow_jvp_target(params, &x, t1, t2, &inputs.noisy, &inputs.clean, &inputs.prior)
                .unwrap()
                .value
        }
        Objective::Composition => composition_target(params, &x, &inputs.times, &inputs.noisy).unwrap().value,
    }
}

#[test]
fn gradients_treat_targets_as_constants() {
    let params = init(small_net(3), 2).unwrap();
    let inputs = batch(1, 4, 3, TimePair::new(0.8, 0.3, 0.4).unwrap());
    for objective in Objective::ALL {
        let mut cfg = TrainConfig::new(objective);
        cfg.adaptive.gamma = 1.0;
        cfg.adaptive.p = 0.0;
        let g = step_gradient(&params, &inputs, &cfg).unwrap();
        let target = target_of(&params, &inputs, objective);
        let h = 1e-6;
        let (mut diff_sq, mut fd_sq) = (0.0, 0.0);
        let mut attached_gap: f64 = 0.0;
        for (ti, tensor) in params.tensors().iter().enumerate() {
            for j in (0..tensor.len()).step_by(3) {
                let shifted = |sign: f64| {
                    let mut p = params.clone();
                    p.tensors_mut()[ti].data_mut()[j] += sign * h;
                    p
                };
                let (plus, minus) = (shifted(1.0), shifted(-1.0));
                let fd = (frozen_loss(&plus, &inputs, &target, &cfg) - frozen_loss(&minus, &inputs, &target, &cfg))
                    / (2.0 * h);
                let live = (frozen_loss(&plus, &inputs, &target_of(&plus, &inputs, objective), &cfg)
                    - frozen_loss(&minus, &inputs, &target_of(&minus, &inputs, objective), &cfg))
                    / (2.0 * h);
                let an = g.grads[ti].data()[j];
                diff_sq += (an - fd) * (an - fd);
                fd_sq += fd * fd;
                attached_gap = attached_gap.max((live - fd).abs());
            }
        }
        let detached_err = (diff_sq / fd_sq).sqrt();
        assert!(detached_err < 1e-6, "{objective}: gradient vs frozen-target FD {detached_err}");
        if objective != Objective::Cfm {
            assert!(attached_gap > 1e-8, "{objective}: target branch has no effect to detach");
        }
    }
}

#[test]
fn degenerate_composition_splits_have_zero_gradient() {
    let params = init(small_net(2), 9).unwrap();
    let cfg = TrainConfig::new(Objective::Composition);
    for alpha in [0.0, 1.0] {
        let inputs = batch(4, 5, 2, TimePair::new(0.7, 0.2, alpha).unwrap());
        let g = step_gradient(&params, &inputs, &cfg).unwrap();
        assert_eq!(g.raw_loss, 0.0, "alpha {alpha}");
        assert!(g.grads.iter().all(|t| t.data().iter().all(|&v| v == 0.0)), "alpha {alpha}");
    }
}

#[test]
fn forward_counts_per_objective() {
    let params = init(small_net(2), 0).unwrap();
    let unequal = TimePair::new(0.9, 0.1, 0.5).unwrap();
    let equal = TimePair::equal(0.6).unwrap();
    let count = |o, tp| {
        let g = step_gradient(&params, &batch(0, 3, 2, tp), &TrainConfig::new(o)).unwrap();
        (g.forwards, g.jvps)
    };
    assert_eq!(count(Objective::Cfm, equal), (1, 0));
    assert_eq!(count(Objective::MeanflowJvp, unequal), (1, 1));
    assert_eq!(count(Objective::MeanflowJvp, equal), (1, 1));
    assert_eq!(count(Objective::Composition, unequal), (3, 0));
    assert_eq!(count(Objective::Composition, equal), (1, 0));
}

#[test]
fn logged_counts_match_replayed_time_pairs() {
    let data = random_task(40, 3);
    let mut cfg = TrainConfig::new(Objective::Composition);
    cfg.steps = 60;
    cfg.batch_size = 4;
    cfg.seed = 3;
    let (_, log) = train(&cfg, small_net(3), &data).unwrap();
    let pairs = replay_time_pairs(&cfg, cfg.steps);
    assert!(pairs.iter().any(|p| p.is_equal()) && pairs.iter().any(|p| !p.is_equal()));
    for (r, p) in log.iter().zip(&pairs) {
        assert_eq!((r.t1, r.t2), (p.t1(), p.t2()));
        assert_eq!(r.forwards, if p.is_equal() { 1 } else { 3 });
        assert_eq!(r.jvps, 0);
    }
}

#[test]
fn zero_interval_targets_coincide() {
    let params = init(small_net(2), 6).unwrap();
    let inputs = batch(8, 4, 2, TimePair::equal(0.35).unwrap());
    let v = cfm_target(&inputs.clean, &inputs.prior).unwrap();
    assert_eq!(target_of(&params, &inputs, Objective::MeanflowJvp), v);
    let comp = step_gradient(&params, &inputs, &TrainConfig::new(Objective::Composition)).unwrap();
    let cfm = step_gradient(&params, &inputs, &TrainConfig::new(Objective::Cfm)).unwrap();
    assert_eq!(comp.grads, cfm.grads);
    assert_eq!(comp.raw_loss, cfm.raw_loss);
}

#[test]
fn meanflow_jvp_target_matches_finite_differences() {
    let mut params = init(small_net(3), 12).unwrap();
    let last = params.tensors().len() - 2;
    params.tensors_mut()[last] = params.tensors()[last].scale(100.0);
    let inputs = batch(2, 4, 3, TimePair::new(0.85, 0.25, 0.5).unwrap());
    let (t1, t2) = (0.85, 0.25);
    let x = interpolate(&inputs.clean, &inputs.prior, t1).unwrap().value;
    let v = inputs.prior.sub(&inputs.clean);
    let jvp = meanflow_jvp_target(&params, &x, t1, t2, &inputs.noisy, &inputs.clean, &inputs.prior).unwrap();
    let fd = meanflow_fd_target(&params, &x, t1, t2, &inputs.noisy, &v, 1e-5).unwrap();
    let rel = jvp.value.max_abs_diff(&fd.value) / fd.value.norm();
    assert!(rel < 1e-5, "relative gap {rel}");
}

#[test]
fn meanflow_target_with_oracle_recovers_average_velocity() {
    let field = OracleField::Gaussian1d { sigma0: 1.5 };
    let model = ExactOracle(&field);
    let x = Tensor::from_vec(vec![0.6, -1.1, 2.0]);
    for (t1, t2) in [(0.9, 0.1), (0.5, 0.45), (0.7, 0.3)] {
        let v = field.velocity(&x, t1).unwrap();
        let tgt = meanflow_fd_target(&model, &x, t1, t2, &x, &v, 1e-4).unwrap();
        let exact = model.average_velocity(&x, t1, t2, &x).unwrap();
        assert!(tgt.value.max_abs_diff(&exact) < 1e-5, "({t1}, {t2})");
    }
}

#[test]
fn split_form_is_bitwise_on_dyadic_times() {
    let params = init(small_net(2), 1).unwrap();
    let x = Tensor::new(vec![2, 2], vec![0.5, -0.25, 1.0, 0.75]).unwrap();
    for (t1, t2, alpha) in [(0.75, 0.25, 0.5), (1.0, 0.0, 0.25), (0.5, 0.125, 0.5), (0.875, 0.5, 0.75)] {
        let tp = TimePair::new(t1, t2, alpha).unwrap();
        let a = composition_target(&params, &x, &tp, &x).unwrap();
        let b = composition_target_split(&params, &x, t1, tp.d1(), tp.d2(), alpha, &x).unwrap();
        assert_eq!(a, b, "({t1}, {t2}, {alpha})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_form_agrees_on_random_times(t1 in 0.05f64..1.0, frac in 0.0f64..1.0, alpha in 0.0f64..1.0) {
        let params = init(small_net(2), 1).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.3, -0.8]).unwrap();
        let tp = TimePair::new(t1, t1 * frac, alpha).unwrap();
        let a = composition_target(&params, &x, &tp, &x).unwrap();
        let b = composition_target_split(&params, &x, t1, tp.d1(), tp.d2(), alpha, &x).unwrap();
        prop_assert!(a.value.max_abs_diff(&b.value) < 1e-12);
    }

    #[test]
    fn oracle_composition_is_exact(x in -3.0f64..3.0, t1 in 0.1f64..1.0, frac in 0.0f64..1.0, alpha in 0.0f64..1.0) {
        let field = OracleField::Gaussian1d { sigma0: 0.7 };
        let model = ExactOracle(&field);
        let x = Tensor::from_vec(vec![x]);
        let tp = TimePair::new(t1, t1 * frac, alpha).unwrap();
        let tgt = composition_target(&model, &x, &tp, &x).unwrap();
        let exact = field.exact_average_velocity(&x, tp.t1(), tp.t2()).unwrap();
        prop_assert!(tgt.value.max_abs_diff(&exact) < 1e-8);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let data = random_task(16, 2);
    for objective in Objective::ALL {
        let mut cfg = TrainConfig::new(objective);
        cfg.learning_rate = 0.0;
        cfg.steps = 5;
        cfg.batch_size = 4;
        let (params, log) = train(&cfg, small_net(2), &data).unwrap();
        assert_eq!(log.len(), 5);
        assert_eq!(params, init(small_net(2), cfg.seed).unwrap(), "{objective}");
    }
}

#[test]
fn empty_run_returns_initialization() {
    let data = random_task(8, 2);
    let mut cfg = TrainConfig::new(Objective::Cfm);
    cfg.steps = 0;
    cfg.seed = 21;
    let (params, log) = train(&cfg, small_net(2), &data).unwrap();
    assert!(log.is_empty());
    assert_eq!(params, init(small_net(2), 21).unwrap());
}

#[test]
fn runs_are_deterministic() {
    let data = random_task(30, 3);
    for objective in Objective::ALL {
        let mut cfg = TrainConfig::new(objective);
        cfg.steps = 25;
        cfg.batch_size = 8;
        cfg.seed = 4;
        let (a, la) = train(&cfg, small_net(3), &data).unwrap();
        let (b, lb) = train(&cfg, small_net(3), &data).unwrap();
        assert_eq!(a, b, "{objective}");
        let strip = |l: &[avflow_core::training::StepRecord]| -> Vec<(f64, f64, usize)> {
            l.iter().map(|r| (r.raw_loss, r.weighted_loss, r.forwards)).collect()
        };
        assert_eq!(strip(&la), strip(&lb));
    }
}

#[test]
fn cfm_loss_trends_down_on_a_linear_task() {
    let data = linear_task(512);
    let mut cfg = TrainConfig::new(Objective::Cfm);
    cfg.steps = 200;
    let (_, log) = train(&cfg, NetConfig::new(1), &data).unwrap();
    let raw: Vec<f64> = log.iter().map(|r| r.raw_loss).collect();
    let avg: Vec<f64> = raw.windows(20).map(|w| w.iter().sum::<f64>() / 20.0).collect();
    let n = avg.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = avg.iter().sum::<f64>() / n;
    let slope = avg
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - mean_x) * (y - mean_y))
        .sum::<f64>();
    assert!(slope < 0.0, "moving average slope {slope}");
    assert!(avg[avg.len() - 1] < 0.5 * avg[0], "first {} last {}", avg[0], avg[avg.len() - 1]);
}

#[test]
fn trainer_rejects_mismatched_data() {
    let data = random_task(4, 3);
    assert!(Trainer::new(TrainConfig::new(Objective::Cfm), small_net(2), &data).is_err());
    let empty = Dataset {
        pairs: vec![],
        ..random_task(1, 2)
    };
    assert!(Trainer::new(TrainConfig::new(Objective::Cfm), small_net(2), &empty).is_err());
}
