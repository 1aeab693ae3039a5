use proptest::prelude::*;
use tensor::checkpoint;
use tensor::rng::{seeded, RngState};
use tensor::{Graph, ParamStore, Tensor};

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn conv_case() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
    (1usize..=3, 1usize..=4, 1usize..=4, 1usize..=4)
        .prop_flat_map(|(b, w, d_in, d_out)| {
            (Just((b, w, d_in, d_out)), w..=6usize)
        })
        .prop_flat_map(|((b, w, d_in, d_out), l)| {
            (
                tensor_strategy(vec![b, l, d_in]),
                tensor_strategy(vec![d_out, w, d_in]),
                tensor_strategy(vec![d_out]),
            )
        })
}

/// Straightforward nested-loop valid cross-correlation.
fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
    let (b, l, d_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (d_out, w) = (k.shape()[0], k.shape()[1]);
    let (xd, kd) = (x.data(), k.data());
    let mut out = Vec::new();
    for bi in 0..b {
        for p in 0..=l - w {
            for o in 0..d_out {
                let mut acc = bias.data()[o];
                for j in 0..w {
                    for c in 0..d_in {
                        acc += kd[(o * w + j) * d_in + c] * xd[(bi * l + p + j) * d_in + c];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn conv1d_matches_nested_loops((x, k, b) in conv_case()) {
        let expected = conv_oracle(&x, &k, &b);
        let mut g = Graph::<f64>::new();
        let (xv, kv, bv) = (g.constant(x), g.constant(k), g.constant(b));
        let y = g.conv1d(xv, kv, bv).unwrap();
        let got = g.value(y).data();
        prop_assert_eq!(got.len(), expected.len());
        for (a, e) in got.iter().zip(&expected) {
            prop_assert!((a - e).abs() < 1e-5, "{} vs {}", a, e);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(x in (1usize..=5, 1usize..=6).prop_flat_map(|(r, c)| tensor_strategy(vec![r, c]))) {
        let cols = x.shape()[1];
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x);
        let s = g.softmax(xv);
        for row in g.value(s).data().chunks(cols) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_is_shift_invariant(
        x in (1usize..=5, 1usize..=6).prop_flat_map(|(r, c)| tensor_strategy(vec![r, c])),
        c in -50.0f64..50.0,
    ) {
        let shifted = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v + c).collect()).unwrap();
        let mut g = Graph::<f64>::new();
        let (a, b) = (g.constant(x), g.constant(shifted));
        let (sa, sb) = (g.softmax(a), g.softmax(b));
        for (p, q) in g.value(sa).data().iter().zip(g.value(sb).data()) {
            prop_assert!((p - q).abs() < 1e-6);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_params_and_rng() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut ps = ParamStore::<f32>::new();
    ps.add("a.weight", Tensor::from_fn(&[3, 2], |i| i as f32 * 0.5 - 1.0));
    ps.add("a.bias", Tensor::from_fn(&[2], |i| -(i as f32)));
    let mut rng = seeded(5);
    let _: u64 = rand::Rng::random(&mut rng);
    let state = RngState::capture(&rng);
    checkpoint::save(&path, &ps, Some(state.clone()), Some("abc".into()), serde_json::json!({"arch": "cnn"})).unwrap();

    let (header, loaded) = checkpoint::load::<f32>(&path).unwrap();
    assert_eq!(header.vocab_hash.as_deref(), Some("abc"));
    assert_eq!(header.meta["arch"], "cnn");
    assert_eq!(loaded.len(), 2);
    for (p, q) in ps.iter().zip(loaded.iter()) {
        assert_eq!(p.name, q.name);
        assert_eq!(p.value, q.value);
    }
    let mut restored = header.rng.unwrap().restore().unwrap();
    assert_eq!(rand::Rng::random::<u64>(&mut restored), rand::Rng::random::<u64>(&mut rng));
    assert!(checkpoint::load::<f64>(&path).is_err());
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut ps = ParamStore::<f32>::new();
    ps.add("w", Tensor::zeros(&[4]));
    checkpoint::save(&path, &ps, None, None, serde_json::Value::Null).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(checkpoint::load::<f32>(&path).is_err());
}
