//! Forward- and reverse-mode derivatives against central finite differences.

use avflow_core::numkit::{grad, jvp, Eager, Kernel, Tensor};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

const FD_STEP: f64 = 1e-5;

fn randn(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Two-layer SiLU network `silu(x·W1 + b1)·W2 + b2` with random weights.
struct TwoLayer {
    weights: Vec<Tensor>,
}

impl TwoLayer {
    fn random(seed: u64, d_in: usize, hidden: usize, d_out: usize) -> Self {
        let mut rng = avflow_core::seeded_rng(seed, 99);
        let weights = vec![
            randn(&mut rng, &[d_in, hidden], 1.0 / (d_in as f64).sqrt()),
            randn(&mut rng, &[1, hidden], 0.5),
            randn(&mut rng, &[hidden, d_out], 1.0 / (hidden as f64).sqrt()),
            randn(&mut rng, &[1, d_out], 0.5),
        ];
        Self { weights }
    }

    fn apply<K: Kernel>(k: &mut K, w: &[K::Value], x: &K::Value) -> K::Value {
        let rows = k.primal(x).rows();
        let z = k.matmul(x, &w[0]);
        let b = k.broadcast_rows(&w[1], rows);
        let z = k.add(&z, &b);
        let h = k.silu(&z);
        let z = k.matmul(&h, &w[2]);
        let b = k.broadcast_rows(&w[3], rows);
        k.add(&z, &b)
    }

    fn eval(&self, x: &Tensor) -> Tensor {
        Self::apply(&mut Eager, &self.weights, x)
    }

    fn lifted<K: Kernel>(&self, k: &mut K) -> Vec<K::Value> {
        self.weights.iter().map(|w| k.constant(w.clone())).collect()
    }
}

fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    a.sub(b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// A scalar loss that routes through every primitive of the kernel.
fn kitchen_sink<K: Kernel>(k: &mut K, p: &[K::Value], x: &K::Value) -> K::Value {
    let rows = k.primal(x).rows();
    let z = k.matmul(x, &p[0]);
    let b = k.broadcast_rows(&p[1], rows);
    let z = k.add(&z, &b);
    let h = k.silu(&z);
    let s = k.sin(&h);
    let c = k.cos(&h);
    let cat = k.concat_cols(&[&s, &c, &h]);
    let width = k.primal(&cat).cols();
    let mid = k.slice_cols(&cat, 1, width - 2);
    let sq = k.square(&mid);
    let one = k.constant(Tensor::full(k.primal(&sq).shape(), 1.0));
    let pos = k.add(&sq, &one);
    let r = k.sqrt(&pos);
    let q = k.powf(&pos, 1.5);
    let inv = k.recip(&q);
    let prod = k.mul(&r, &inv);
    let diff = k.sub(&prod, &mid);
    let scaled = k.scale(&diff, 0.7);
    let row_sums = k.sum_rows(&scaled);
    let spread = k.broadcast_cols(&row_sums, 3);
    let m = k.mean(&spread);
    let t = k.sum(&scaled);
    k.add(&m, &t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jvp_matches_central_difference(seed in any::<u64>(), batch in 1usize..4, d_in in 1usize..6) {
        let net = TwoLayer::random(seed, d_in, 7, 3);
        let mut rng = avflow_core::seeded_rng(seed, 1);
        let x = randn(&mut rng, &[batch, d_in], 1.0);
        let v = randn(&mut rng, &[batch, d_in], 1.0);
        let (y, tangent) = jvp(
            |k, xs| {
                let w = net.lifted(k);
                TwoLayer::apply(k, &w, &xs[0])
            },
            &[x.clone()],
            &[v.clone()],
        )
        .unwrap();
        prop_assert_eq!(&y, &net.eval(&x));
        let fd = net
            .eval(&x.axpy(FD_STEP, &v))
            .sub(&net.eval(&x.axpy(-FD_STEP, &v)))
            .scale(0.5 / FD_STEP);
        let err = rel_err(&tangent, &fd);
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn gradient_matches_central_difference(seed in any::<u64>(), batch in 1usize..4) {
        let net = TwoLayer::random(seed, 4, 6, 2);
        let mut rng = avflow_core::seeded_rng(seed, 2);
        let x = randn(&mut rng, &[batch, 4], 1.0);
        let target = randn(&mut rng, &[batch, 2], 1.0);
        let loss_of = |w: &[Tensor]| {
            TwoLayer::apply(&mut Eager, w, &x).sub(&target).norm_sq()
        };
        let (loss, grads) = grad(&net.weights, |tape, w| {
            let xv = tape.constant(x.clone());
            let out = TwoLayer::apply(tape, w, &xv);
            let tgt = tape.constant(target.clone());
            let d = tape.sub(&out, &tgt);
            let sq = tape.square(&d);
            Ok(tape.sum(&sq))
        })
        .unwrap();
        prop_assert!((loss - loss_of(&net.weights)).abs() <= 1e-12 * loss.max(1.0));
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let mut plus = net.weights.clone();
                let mut minus = net.weights.clone();
                plus[pi] = bump(&plus[pi], j, FD_STEP);
                minus[pi] = bump(&minus[pi], j, -FD_STEP);
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * FD_STEP);
                let a = g.data()[j];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                prop_assert!(err < 1e-5, "param {pi}[{j}]: tape {a} vs fd {fd}");
            }
        }
    }

    #[test]
    fn jvp_is_linear_in_the_tangent(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let net = TwoLayer::random(seed, 3, 5, 3);
        let mut rng = avflow_core::seeded_rng(seed, 3);
        let x = randn(&mut rng, &[2, 3], 1.0);
        let v1 = randn(&mut rng, &[2, 3], 1.0);
        let v2 = randn(&mut rng, &[2, 3], 1.0);
        let tangent = |v: &Tensor| {
            jvp(
                |k, xs| {
                    let w = net.lifted(k);
                    TwoLayer::apply(k, &w, &xs[0])
                },
                &[x.clone()],
                &[v.clone()],
            )
            .unwrap()
            .1
        };
        let mixed = tangent(&v1.scale(a).axpy(b, &v2));
        let separate = tangent(&v1).scale(a).axpy(b, &tangent(&v2));
        prop_assert!(mixed.max_abs_diff(&separate) < 1e-12);
    }

    #[test]
    fn forward_and_reverse_agree(seed in any::<u64>()) {
        let mut rng = avflow_core::seeded_rng(seed, 4);
        let params = vec![randn(&mut rng, &[3, 4], 0.5), randn(&mut rng, &[1, 4], 0.5)];
        let x = randn(&mut rng, &[2, 3], 1.0);
        let (_, grads) = grad(&params, |tape, p| {
            let xv = tape.constant(x.clone());
            Ok(kitchen_sink(tape, p, &xv))
        })
        .unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let tangents: Vec<Tensor> = params
                    .iter()
                    .enumerate()
                    .map(|(qi, q)| {
                        let mut t = Tensor::zeros(q.shape());
                        if qi == pi {
                            t = bump(&t, j, 1.0);
                        }
                        t
                    })
                    .collect();
                let (_, d) = jvp(
                    |k, ps| {
                        let xv = k.constant(x.clone());
                        kitchen_sink(k, ps, &xv)
                    },
                    &params,
                    &tangents,
                )
                .unwrap();
                let a = g.data()[j];
                let b = d.item();
                let err = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
                prop_assert!(err < 1e-10 || a == b, "param {pi}[{j}]: reverse {a} vs forward {b}");
            }
        }
    }

    #[test]
    fn every_primitive_differentiates_correctly(seed in any::<u64>()) {
        let mut rng = avflow_core::seeded_rng(seed, 5);
        let params = vec![randn(&mut rng, &[3, 4], 0.5), randn(&mut rng, &[1, 4], 0.5)];
        let x = randn(&mut rng, &[2, 3], 1.0);
        let loss_of = |p: &[Tensor]| kitchen_sink(&mut Eager, p, &x).item();
        let (_, grads) = grad(&params, |tape, p| {
            let xv = tape.constant(x.clone());
            Ok(kitchen_sink(tape, p, &xv))
        })
        .unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[pi] = bump(&plus[pi], j, FD_STEP);
                minus[pi] = bump(&minus[pi], j, -FD_STEP);
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * FD_STEP);
                let a = g.data()[j];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                prop_assert!(err < 1e-5, "param {pi}[{j}]: tape {a} vs fd {fd}");
            }
        }
    }

    #[test]
    fn zero_tangent_stays_zero(seed in any::<u64>()) {
        let mut rng = avflow_core::seeded_rng(seed, 6);
        let params = vec![randn(&mut rng, &[3, 4], 0.5), randn(&mut rng, &[1, 4], 0.5)];
        let x = randn(&mut rng, &[2, 3], 1.0);
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let (_, d) = jvp(
            |k, ps| {
                let xv = k.constant(x.clone());
                kitchen_sink(k, ps, &xv)
            },
            &params,
            &zeros,
        )
        .unwrap();
        prop_assert_eq!(d.item(), 0.0);
    }

    #[test]
    fn primitives_are_deterministic(seed in any::<u64>()) {
        let mut rng = avflow_core::seeded_rng(seed, 7);
        let params = vec![randn(&mut rng, &[3, 4], 0.5), randn(&mut rng, &[1, 4], 0.5)];
        let x = randn(&mut rng, &[2, 3], 1.0);
        let run = || {
            grad(&params, |tape, p| {
                let xv = tape.constant(x.clone());
                Ok(kitchen_sink(tape, p, &xv))
            })
            .unwrap()
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        prop_assert_eq!(l1.to_bits(), l2.to_bits());
        prop_assert_eq!(g1, g2);
    }
}

fn bump(t: &Tensor, j: usize, h: f64) -> Tensor {
    let mut data = t.data().to_vec();
    data[j] += h;
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

#[test]
fn stop_gradient_product_rule() {
    let p = vec![Tensor::new(vec![1, 3], vec![0.5, -2.0, 3.0]).unwrap()];
    let (_, g) = grad(&p, |tape, v| {
        let d = tape.stop_gradient(&v[0]);
        let prod = tape.mul(&v[0], &d);
        Ok(tape.sum(&prod))
    })
    .unwrap();
    assert_eq!(g[0], p[0]);
}

#[test]
fn untouched_parameters_get_exact_zeros() {
    let p = vec![Tensor::from_vec(vec![1.0, 2.0]), Tensor::from_vec(vec![3.0])];
    let (_, g) = grad(&p, |tape, v| {
        let sq = tape.square(&v[0]);
        Ok(tape.sum(&sq))
    })
    .unwrap();
    assert_eq!(g[0].data(), &[2.0, 4.0]);
    assert_eq!(g[1].data(), &[0.0]);
}

#[test]
fn jvp_consumes_no_tape() {
    let x = Tensor::from_vec(vec![0.5]);
    let (_, d) = jvp(|k, xs| k.sin(&xs[0]), &[x], &[Tensor::from_vec(vec![2.0])]).unwrap();
    assert_eq!(d.data(), &[2.0 * 0.5f64.cos()]);
}
