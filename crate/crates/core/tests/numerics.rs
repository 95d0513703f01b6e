mod common;

use nfsense_core::numerics::{Tape, Tensor};
use proptest::prelude::*;

use common::grads::*;

#[test]
fn every_op_matches_central_differences() {
    for case in op_cases() {
        let err = op_error(&case);
        assert!(err < OP_TOL, "{}: relative error {err:e}", case.name);
    }
}

#[test]
fn zero_vector_cosine_is_zero_with_zero_gradient() {
    let mut t = Tape::new();
    let a = t.param(Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap());
    let b = t.constant(Tensor::new(vec![2, 3], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap());
    let c = t.cosine_similarity(a, b).unwrap();
    assert_eq!(t.value(c).data()[0], 0.0);
    let s = t.sum(c, None).unwrap();
    let g = t.backward(s).unwrap().tensor(a);
    assert_eq!(&g.data()[..3], &[0.0, 0.0, 0.0]);
}

#[test]
fn identical_runs_give_bit_identical_gradients() {
    let run = || {
        let mut rng = nfsense_core::rng::rng(3);
        let mut t = Tape::new();
        let x = t.param(rand_tensor(&mut rng, &[5, 6], -1.0, 1.0));
        let w = t.constant(rand_tensor(&mut rng, &[6, 4], -1.0, 1.0));
        let y = t.matmul(x, w).unwrap();
        let y = t.log_softmax(y);
        let s = t.sum(y, None).unwrap();
        t.backward(s).unwrap().tensor(x)
    };
    assert_eq!(run(), run());
}

#[test]
fn pretraining_loss_gradient_at_random_points() {
    for point in 0..LOSS_POINTS {
        let err = pt_loss_error(point);
        assert!(err < LOSS_TOL, "point {point}: relative error {err:e}");
    }
}

#[test]
fn finetuning_loss_gradient_at_random_points() {
    for point in 0..LOSS_POINTS {
        let err = ft_loss_error(point);
        assert!(err < LOSS_TOL, "point {point}: relative error {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(data in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![3, 4], data).unwrap());
        let p = t.softmax(x);
        for r in 0..3 {
            let s: f64 = t.value(p).row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_an_involution(data in prop::collection::vec(-5.0f64..5.0, 12)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![3, 4], data.clone()).unwrap());
        let y = t.transpose(x).unwrap();
        let z = t.transpose(y).unwrap();
        prop_assert_eq!(t.value(z).data(), &data[..]);
    }

    #[test]
    fn matmul_distributes_over_add(
        a in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-2.0f64..2.0, 6),
        c in prop::collection::vec(-2.0f64..2.0, 6),
    ) {
        let a = Tensor::new(vec![2, 3], a).unwrap();
        let b = Tensor::new(vec![3, 2], b).unwrap();
        let c = Tensor::new(vec![3, 2], c).unwrap();
        let bc = Tensor::new(vec![3, 2], b.data().iter().zip(c.data()).map(|(x, y)| x + y).collect()).unwrap();
        let lhs = a.matmul(&bc).unwrap();
        let ab = a.matmul(&b).unwrap();
        let ac = a.matmul(&c).unwrap();
        for i in 0..4 {
            prop_assert!((lhs.data()[i] - ab.data()[i] - ac.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_matches_log_of_softmax(data in prop::collection::vec(-10.0f64..10.0, 8)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 4], data).unwrap());
        let ls = t.log_softmax(x);
        let s = t.softmax(x);
        for (a, b) in t.value(ls).data().iter().zip(t.value(s).data()) {
            prop_assert!((a - b.ln()).abs() < 1e-10);
        }
    }
}

