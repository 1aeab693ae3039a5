mod common;

use approx::assert_abs_diff_eq;
use tensor::rng::seeded;
use tensor::{Graph, Mask, Tensor, TensorError};

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

#[test]
fn matmul_identity_and_hand_example() {
    let mut g = Graph::new();
    let eye = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let x = g.constant(t(&[2, 3], &[1.0, -2.0, 3.5, 0.25, 7.0, -1.0]));
    let y = g.matmul(eye, x).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let b = g.constant(t(&[2, 1], &[1.0, 1.0]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    assert_eq!(g.shape(c), &[2, 1]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::<f64>::zeros(&[2, 3]));
    let b = g.constant(Tensor::<f64>::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    match &err {
        TensorError::ShapeMismatch { lhs, rhs, .. } => {
            assert_eq!(lhs, &[2, 3]);
            assert_eq!(rhs, &[2, 3]);
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("[2, 3]"));
}

#[test]
fn embedding_lookup_and_scatter() {
    let table = t(&[3, 2], &[0.5, -0.5, 1.0, 2.0, 3.0, 4.0]);
    let mut g = Graph::new();
    let tb = g.leaf(table.clone());
    let out = g.embedding(tb, &[0], 1, 1, None).unwrap();
    assert_eq!(g.value(out).data(), &[0.5, -0.5]);
    assert_eq!(g.shape(out), &[1, 1, 2]);

    // id 2 appears twice: its gradient row is the sum of both upstream rows.
    let mut g = Graph::new();
    let tb = g.leaf(table.clone());
    let out = g.embedding(tb, &[2, 1, 2], 1, 3, None).unwrap();
    let w = g.constant(t(&[1, 3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let prod = g.mul(out, w).unwrap();
    let loss = g.sum(prod);
    g.backward(loss, None).unwrap();
    assert_eq!(g.grad(tb).unwrap(), &[0.0, 0.0, 3.0, 4.0, 6.0, 8.0]);

    let mut g = Graph::new();
    let tb = g.leaf(table);
    assert!(matches!(
        g.embedding(tb, &[3], 1, 1, None),
        Err(TensorError::IndexOutOfRange { index: 3, size: 3, .. })
    ));
}

#[test]
fn embedding_padding_row_gets_no_gradient() {
    let mut g = Graph::new();
    let tb = g.leaf(t(&[2, 1], &[0.0, 1.0]));
    let out = g.embedding(tb, &[0, 1, 0], 1, 3, Some(0)).unwrap();
    let loss = g.sum(out);
    g.backward(loss, None).unwrap();
    assert_eq!(g.grad(tb).unwrap(), &[0.0, 1.0]);
}

#[test]
fn conv1d_hand_example_zero_kernel_and_bound() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 4, 1], &[1.0, 2.0, 3.0, 4.0]));
    let k = g.constant(t(&[1, 3, 1], &[1.0, 0.0, -1.0]));
    let b = g.constant(t(&[1], &[0.0]));
    let y = g.conv1d(x, k, b).unwrap();
    assert_eq!(g.value(y).data(), &[-2.0, -2.0]);
    assert_eq!(g.shape(y), &[1, 2, 1]);

    let k0 = g.constant(Tensor::zeros(&[2, 2, 1]));
    let b0 = g.constant(Tensor::zeros(&[2]));
    let y0 = g.conv1d(x, k0, b0).unwrap();
    assert!(g.value(y0).data().iter().all(|&v| v == 0.0));

    let short = g.constant(Tensor::zeros(&[1, 3, 1]));
    let k5 = g.constant(Tensor::zeros(&[1, 5, 1]));
    assert!(matches!(
        g.conv1d(short, k5, b),
        Err(TensorError::InvalidShape { op: "conv1d", .. })
    ));
}

#[test]
fn max_over_sequence_masking_and_ties() {
    let x = t(&[1, 2, 2], &[1.0, 5.0, 3.0, 2.0]);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let full = g.max_over_sequence(xv, &Mask::all(1, 2)).unwrap();
    assert_eq!(g.value(full).data(), &[3.0, 5.0]);
    let first = g.max_over_sequence(xv, &Mask::from_lengths(&[1], 2)).unwrap();
    assert_eq!(g.value(first).data(), &[1.0, 5.0]);

    let mut g = Graph::new();
    let tie = g.leaf(t(&[1, 2, 1], &[2.0, 2.0]));
    let m = g.max_over_sequence(tie, &Mask::all(1, 2)).unwrap();
    let loss = g.sum(m);
    g.backward(loss, None).unwrap();
    assert_eq!(g.grad(tie).unwrap(), &[1.0, 0.0]);

    let mut g = Graph::new();
    let xv = g.constant(x);
    let empty = Mask::new(1, 2, vec![false, false]).unwrap();
    assert!(matches!(
        g.max_over_sequence(xv, &empty),
        Err(TensorError::EmptyMaskRow { row: 0, .. })
    ));
}

#[test]
fn mean_over_sequence_examples() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 2, 1], &[1.0, 3.0]));
    let m = g.mean_over_sequence(x, &Mask::all(1, 2)).unwrap();
    assert_eq!(g.value(m).data(), &[2.0]);
    let m = g.mean_over_sequence(x, &Mask::from_lengths(&[1], 2)).unwrap();
    assert_eq!(g.value(m).data(), &[1.0]);
    let c = g.constant(Tensor::full(&[2, 4, 3], 0.7));
    let m = g.mean_over_sequence(c, &Mask::from_lengths(&[4, 2], 4)).unwrap();
    for &v in g.value(m).data() {
        assert_abs_diff_eq!(v, 0.7, epsilon = 1e-12);
    }
    let empty = Mask::new(1, 2, vec![false, false]).unwrap();
    assert!(g.mean_over_sequence(x, &empty).is_err());
}

#[test]
fn layer_norm_examples() {
    let mut g = Graph::new();
    let ones = g.constant(Tensor::full(&[2], 1.0));
    let zeros = g.constant(Tensor::zeros(&[2]));
    let fives = g.constant(Tensor::full(&[2], 5.0));

    let c = g.constant(Tensor::full(&[1, 2], 3.0));
    let y = g.layer_norm(c, ones, zeros, 1e-5).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0]);

    let x = g.constant(t(&[1, 2], &[1.0, -1.0]));
    let y = g.layer_norm(x, ones, zeros, 1e-12).unwrap();
    assert_abs_diff_eq!(g.value(y).data()[0], 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(g.value(y).data()[1], -1.0, epsilon = 1e-9);

    let y = g.layer_norm(x, zeros, fives, 1e-5).unwrap();
    assert_eq!(g.value(y).data(), &[5.0, 5.0]);
}

#[test]
fn relu_softmax_dropout_examples() {
    let mut g = Graph::new();
    let x = g.constant(t(&[2], &[-3.0, 3.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 3.0]);

    let eq = g.constant(Tensor::full(&[2, 5], 0.3));
    let s = g.softmax(eq);
    for &v in g.value(s).data() {
        assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
    }

    let mut rng = seeded(1);
    let y = g.dropout(x, 0.5, false, &mut rng).unwrap();
    assert_eq!(y, x);
    assert!(matches!(g.dropout(x, 1.0, true, &mut rng), Err(TensorError::Config(_))));
}

#[test]
fn dropout_train_mode_scales_survivors_and_is_reproducible() {
    let run = |seed| {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::full(&[1000], 1.0));
        let mut rng = seeded(seed);
        let y = g.dropout(x, 0.3, true, &mut rng).unwrap();
        g.value(y).data().to_vec()
    };
    let a = run(9);
    assert_eq!(a, run(9));
    assert_ne!(a, run(10));
    let scale = 1.0f32 / 0.7;
    assert!(a.iter().all(|&v| v == 0.0 || v == scale));
    let dropped = a.iter().filter(|&&v| v == 0.0).count();
    assert!((200..400).contains(&dropped), "dropped {dropped}");
}

#[test]
fn attention_single_key_passes_value_through() {
    let mut g = Graph::new();
    let q = g.constant(t(&[1, 1, 2], &[0.3, -1.2]));
    let k = g.constant(t(&[1, 1, 2], &[2.0, 0.5]));
    let v = g.constant(t(&[1, 1, 2], &[7.0, -3.0]));
    let out = g.attention(q, k, v, &Mask::all(1, 1), 2).unwrap();
    assert_eq!(g.value(out).data(), &[7.0, -3.0]);
}

#[test]
fn attention_identical_keys_give_uniform_weights() {
    let mut g = Graph::new();
    let q = g.constant(t(&[1, 1, 2], &[0.4, 0.9]));
    let k = g.constant(Tensor::full(&[1, 3, 2], 0.5));
    let v = g.constant(t(&[1, 3, 2], &[1.0, 0.0, 2.0, 3.0, 6.0, 9.0]));
    let out = g.attention(q, k, v, &Mask::from_lengths(&[2], 3), 1).unwrap();
    // mean of the two unmasked value rows
    assert_abs_diff_eq!(g.value(out).data()[0], 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(g.value(out).data()[1], 1.5, epsilon = 1e-12);
}

#[test]
fn attention_ignores_masked_positions() {
    let mut rng = common::rng(3);
    let x = common::randn(&mut rng, &[1, 4, 4]);
    let mut y = x.clone();
    for v in &mut y.data_mut()[3 * 4..] {
        *v = 100.0;
    }
    let mask = Mask::from_lengths(&[3], 4);
    let run = |input: &Tensor<f64>| {
        let mut g = Graph::new();
        let xv = g.constant(input.clone());
        let out = g.attention(xv, xv, xv, &mask, 2).unwrap();
        g.value(out).data()[..3 * 4].to_vec()
    };
    assert_eq!(run(&x), run(&y));
}

#[test]
fn attention_rejects_indivisible_width() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::<f64>::zeros(&[1, 2, 6]));
    assert!(matches!(
        g.attention(x, x, x, &Mask::all(1, 2), 4),
        Err(TensorError::Config(_))
    ));
}

#[test]
fn backward_contract() {
    // loss = sum(W·x): ∂loss/∂W[i,j] = x[j] for every row i.
    let mut g = Graph::new();
    let w = g.leaf(t(&[2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
    let x = g.constant(t(&[3, 1], &[1.0, -2.0, 4.0]));
    let unused = g.leaf(t(&[2], &[1.0, 1.0]));
    let y = g.matmul(w, x).unwrap();
    let loss = g.sum(y);
    g.backward(loss, None).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[1.0, -2.0, 4.0, 1.0, -2.0, 4.0]);
    assert!(g.grad(unused).is_none_or(|gr| gr.iter().all(|&v| v == 0.0)));

    g.backward(loss, None).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[2.0, -4.0, 8.0, 2.0, -4.0, 8.0]);

    assert!(matches!(g.backward(y, None), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn reused_input_accumulates() {
    let mut g = Graph::new();
    let x = g.leaf(t(&[2], &[1.5, -2.0]));
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    let loss = g.sum(z);
    g.backward(loss, None).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4.0, -3.0]);
}

#[test]
fn sinusoidal_position_zero() {
    let pe = tensor::nn::sinusoidal_positions::<f64>(3, 8);
    for j in 0..8 {
        let expected = if j % 2 == 0 { 0.0 } else { 1.0 };
        assert_eq!(pe.data()[j], expected);
    }
    assert_abs_diff_eq!(pe.data()[8], 1f64.sin(), epsilon = 1e-15);
}

#[test]
fn conv_output_mask_keeps_one_window_for_short_rows() {
    let mask = Mask::from_lengths(&[2, 6, 3], 6);
    let out = tensor::nn::conv_output_mask(&mask, 3);
    assert_eq!(out.len(), 4);
    assert_eq!((out.count(0), out.count(1), out.count(2)), (1, 4, 1));
}
