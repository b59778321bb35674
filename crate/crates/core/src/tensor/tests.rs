use super::gradcheck::{check, DEFAULT_STEP};
use super::{Tape, Tensor};
use ndarray::{arr1, arr2, ArrayD, IxDyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FD_TOL: f64 = 1e-4;

fn randd(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-2.0..2.0))
}

/// Random values bounded away from zero, for ops with a kink at the origin.
fn randd_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), || {
        let mag = rng.random_range(0.1..2.0);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Weighted sum turns any output into a scalar objective that exercises the
/// full Jacobian, not just the row sums.
fn weighted(tape: &Tape, t: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::constant(randd(&mut rng, t.shape()));
    tape.sum(&tape.mul(t, &w))
}

// ---- forward values -------------------------------------------------------

#[test]
fn softmax_of_single_element_is_one() {
    let tape = Tape::new();
    let x = Tensor::constant2(arr2(&[[3.7]]));
    let y = tape.softmax(&x, 1);
    assert_eq!(y.data().iter().copied().collect::<Vec<_>>(), vec![1.0]);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tape = Tape::new();
    let x = Tensor::constant(randd(&mut rng, &[17, 5]));
    let y = tape.softmax(&x, 1);
    let v = y.view2("test");
    for row in v.rows() {
        let s: f64 = row.sum();
        assert!((s - 1.0).abs() <= 1e-9, "row sum {s}");
    }
}

#[test]
fn log_softmax_matches_log_of_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tape = Tape::new();
    let x = Tensor::constant(randd(&mut rng, &[6, 5]));
    let a = tape.log_softmax(&x, 1);
    let b = tape.softmax(&x, 1);
    for (la, sb) in a.data().iter().zip(b.data().iter()) {
        assert!((la - sb.ln()).abs() < 1e-12);
    }
}

#[test]
fn huber_at_zero_is_zero_and_quadratic_inside() {
    let tape = Tape::new();
    let x = Tensor::constant1(arr1(&[0.0, 1.0, -3.0, 15.0]));
    let y = tape.huber(&x, 10.0);
    let v: Vec<f64> = y.data().iter().copied().collect();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 0.5).abs() < 1e-15);
    assert!((v[2] - 4.5).abs() < 1e-15);
    // Past the delta the penalty is linear: 10*(15 - 5).
    assert!((v[3] - 100.0).abs() < 1e-12);
}

#[test]
fn matmul_known_product() {
    let tape = Tape::new();
    let a = Tensor::constant2(arr2(&[[1.0, 2.0], [3.0, 4.0]]));
    let b = Tensor::constant2(arr2(&[[5.0, 6.0], [7.0, 8.0]]));
    let c = tape.matmul(&a, &b);
    assert_eq!(c.view2("t"), arr2(&[[19.0, 22.0], [43.0, 50.0]]));
}

#[test]
fn clip_clamps_values() {
    let tape = Tape::new();
    let x = Tensor::constant1(arr1(&[-2.0, 0.5, 2.0]));
    let y = tape.clip(&x, -1.0, 1.0);
    assert_eq!(y.data().iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.5, 1.0]);
}

#[test]
fn mean_pool_rows_averages_groups() {
    let tape = Tape::new();
    let x = Tensor::constant2(arr2(&[[1.0, 2.0], [3.0, 4.0], [10.0, 20.0], [30.0, 40.0]]));
    let y = tape.mean_pool_rows(&x, 2);
    assert_eq!(y.view2("t"), arr2(&[[2.0, 3.0], [20.0, 30.0]]));
}

#[test]
fn reshape_rows_flattens_groups() {
    let tape = Tape::new();
    let x = Tensor::constant2(arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]));
    let y = tape.reshape_rows(&x, 2);
    assert_eq!(y.view2("t"), arr2(&[[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]));
}

// ---- backward: exact cases ------------------------------------------------

#[test]
fn linear_gradient_is_outer_product_structure() {
    // loss = sum(W x): d/dW[i][j] = x[j] for every i, d/dx[j] = sum_i W[i][j].
    let tape = Tape::new();
    let w = tape.leaf(arr2(&[[1.0, -2.0], [0.5, 3.0]]).into_dyn());
    let x = tape.leaf(arr2(&[[2.0], [4.0]]).into_dyn());
    let loss = tape.sum(&tape.matmul(&w, &x));
    let grads = tape.backward(&loss);
    assert_eq!(
        grads.get(&w).unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap(),
        arr2(&[[2.0, 4.0], [2.0, 4.0]])
    );
    assert_eq!(
        grads.get(&x).unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap(),
        arr2(&[[1.5], [1.0]])
    );
}

#[test]
fn disconnected_leaf_gets_no_gradient() {
    let tape = Tape::new();
    let used = tape.leaf(arr1(&[1.0, 2.0]).into_dyn());
    let unused = tape.leaf(arr1(&[5.0]).into_dyn());
    let loss = tape.sum(&used);
    let grads = tape.backward(&loss);
    assert!(grads.get(&unused).is_none());
    assert_eq!(grads.get_or_zero(&unused), ArrayD::<f64>::zeros(IxDyn(&[1])));
    assert!(grads.get(&used).is_some());
}

#[test]
fn gather_rows_backward_accumulates_repeats() {
    let tape = Tape::new();
    let x = tape.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
    // Row 0 selected twice: its gradient doubles.
    let y = tape.gather_rows(&x, &[0, 0, 1]);
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss);
    assert_eq!(
        grads.get(&x).unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap(),
        arr2(&[[2.0, 2.0], [1.0, 1.0]])
    );
}

#[test]
fn backward_into_accumulates_across_calls() {
    let tape = Tape::new();
    let x = tape.leaf(arr1(&[1.0, 2.0]).into_dyn());
    let loss = tape.sum(&x);
    let mut grads = super::Gradients::new();
    tape.backward_into(&loss, &mut grads);
    tape.backward_into(&loss, &mut grads);
    assert_eq!(grads.get(&x).unwrap(), &ArrayD::from_elem(IxDyn(&[2]), 2.0));
}

#[test]
fn tensor_reused_twice_accumulates_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(arr1(&[3.0]).into_dyn());
    // loss = x + x => gradient 2.
    let loss = tape.sum(&tape.add(&x, &x));
    let grads = tape.backward(&loss);
    assert_eq!(grads.get(&x).unwrap()[[0]], 2.0);
}

// ---- backward: finite differences per operator ----------------------------

#[test]
fn fd_add_sub_mul_min() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = randd(&mut rng, &[4, 3]);
    let b = randd(&mut rng, &[4, 3]);
    for op in 0..4 {
        let r = check(&[a.clone(), b.clone()], DEFAULT_STEP, move |t, xs| {
            let y = match op {
                0 => t.add(&xs[0], &xs[1]),
                1 => t.sub(&xs[0], &xs[1]),
                2 => t.mul(&xs[0], &xs[1]),
                _ => t.min_elem(&xs[0], &xs[1]),
            };
            weighted(t, &y, 99)
        });
        assert!(r.max_rel_err < FD_TOL, "op {op}: {:?}", r);
    }
}

#[test]
fn fd_unary_elementwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = randd_off_zero(&mut rng, &[5, 4]);
    for op in 0..6 {
        let r = check(&[x.clone()], DEFAULT_STEP, move |t, xs| {
            let y = match op {
                0 => t.relu(&xs[0]),
                1 => t.tanh(&xs[0]),
                2 => t.exp(&xs[0]),
                3 => t.scalar_mul(&xs[0], -1.7),
                4 => t.scalar_add(&xs[0], 0.3),
                _ => t.huber(&xs[0], 1.0),
            };
            weighted(t, &y, 100)
        });
        assert!(r.max_rel_err < FD_TOL, "op {op}: {:?}", r);
    }
}

#[test]
fn fd_clip_away_from_bounds() {
    // Values inside (-1,1) scaled to avoid landing within h of the bounds.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = ArrayD::from_shape_simple_fn(IxDyn(&[6]), || rng.random_range(-0.9..0.9));
    let r = check(&[x], DEFAULT_STEP, |t, xs| weighted(t, &t.clip(&xs[0], -1.0, 1.0), 101));
    assert!(r.max_rel_err < FD_TOL, "{r:?}");
}

#[test]
fn fd_softmax_and_log_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = randd(&mut rng, &[3, 5]);
    let r = check(&[x.clone()], DEFAULT_STEP, |t, xs| weighted(t, &t.softmax(&xs[0], 1), 102));
    assert!(r.max_rel_err < FD_TOL, "softmax {r:?}");
    let r = check(&[x], DEFAULT_STEP, |t, xs| weighted(t, &t.log_softmax(&xs[0], 1), 103));
    assert!(r.max_rel_err < FD_TOL, "log_softmax {r:?}");
}

#[test]
fn fd_matmul_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let a = randd(&mut rng, &[4, 3]);
    let b = randd(&mut rng, &[3, 2]);
    let bias = randd(&mut rng, &[2]);
    let r = check(&[a, b, bias], DEFAULT_STEP, |t, xs| {
        weighted(t, &t.add_bias(&t.matmul(&xs[0], &xs[1]), &xs[2]), 104)
    });
    assert!(r.max_rel_err < FD_TOL, "{r:?}");
}

#[test]
fn fd_reductions_and_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = randd(&mut rng, &[6, 4]);
    let r = check(&[x.clone()], DEFAULT_STEP, |t, xs| t.mean(&xs[0]));
    assert!(r.max_rel_err < FD_TOL, "mean {r:?}");
    let r = check(&[x.clone()], DEFAULT_STEP, |t, xs| weighted(t, &t.sum_axis(&xs[0], 1), 105));
    assert!(r.max_rel_err < FD_TOL, "sum_axis {r:?}");
    let r = check(&[x.clone()], DEFAULT_STEP, |t, xs| {
        weighted(t, &t.mean_pool_rows(&xs[0], 3), 106)
    });
    assert!(r.max_rel_err < FD_TOL, "mean_pool_rows {r:?}");
    let r = check(&[x.clone()], DEFAULT_STEP, |t, xs| {
        weighted(t, &t.reshape_rows(&xs[0], 2), 107)
    });
    assert!(r.max_rel_err < FD_TOL, "reshape_rows {r:?}");
    let r = check(&[x], DEFAULT_STEP, |t, xs| {
        weighted(t, &t.gather_rows(&xs[0], &[5, 0, 0, 3]), 108)
    });
    assert!(r.max_rel_err < FD_TOL, "gather_rows {r:?}");
}

#[test]
fn fd_concat_cols() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let a = randd(&mut rng, &[4, 2]);
    let b = randd(&mut rng, &[4, 3]);
    let r = check(&[a, b], DEFAULT_STEP, |t, xs| {
        weighted(t, &t.concat_cols(&[&xs[0], &xs[1]]), 109)
    });
    assert!(r.max_rel_err < FD_TOL, "{r:?}");
}

#[test]
fn fd_two_layer_mlp_composite() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let x = randd(&mut rng, &[3, 4]);
    let w0 = randd(&mut rng, &[4, 8]);
    let b0 = randd(&mut rng, &[8]);
    let w1 = randd(&mut rng, &[8, 2]);
    let b1 = randd(&mut rng, &[2]);
    let r = check(&[x, w0, b0, w1, b1], DEFAULT_STEP, |t, xs| {
        let h = t.tanh(&t.add_bias(&t.matmul(&xs[0], &xs[1]), &xs[2]));
        let out = t.add_bias(&t.matmul(&h, &xs[3]), &xs[4]);
        weighted(t, &out, 110)
    });
    assert!(r.max_rel_err < FD_TOL, "{r:?}");
}

// ---- determinism ----------------------------------------------------------

#[test]
fn forward_backward_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let tape = Tape::new();
        let x = tape.leaf(randd(&mut rng, &[7, 6]));
        let w = tape.leaf(randd(&mut rng, &[6, 5]));
        let y = tape.softmax(&tape.matmul(&tape.relu(&x), &w), 1);
        let loss = tape.mean(&y);
        let grads = tape.backward(&loss);
        (loss.scalar(), grads.get(&w).unwrap().clone())
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert!(l1.to_bits() == l2.to_bits());
    assert_eq!(g1, g2);
}

#[test]
#[should_panic(expected = "loss must hold exactly one element")]
fn backward_rejects_non_scalar_loss() {
    let tape = Tape::new();
    let x = tape.leaf(arr1(&[1.0, 2.0]).into_dyn());
    let y = tape.relu(&x);
    tape.backward(&y);
}

#[test]
#[should_panic(expected = "shape mismatch")]
fn add_rejects_shape_mismatch() {
    let tape = Tape::new();
    let a = Tensor::constant1(arr1(&[1.0, 2.0]));
    let b = Tensor::constant1(arr1(&[1.0]));
    tape.add(&a, &b);
}
