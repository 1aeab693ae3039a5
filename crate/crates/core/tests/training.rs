mod common;

use emojinet::losses::{Criterion, LossKind};
use emojinet::models::{Arch, Model, ModelConfig};
use emojinet::optim::{OptimConfig, OptimKind};
use emojinet::presets::DEFAULT_GAMMA;
use emojinet::tensor::rng::seeded;
use emojinet::training::{curves_csv, evaluate, overfit_probe, train, TrainOptions, TrainOutcome, CURVES_HEADER};
use emojinet::corpus::EncodedSet;

fn small(arch: Arch, vocab_size: usize) -> ModelConfig {
    let mut c = ModelConfig::with_dim(arch, vocab_size, 16);
    c.hidden_dims = vec![32, 16];
    c.filters = 8;
    c
}

fn focal(train: &EncodedSet) -> Criterion {
    Criterion::from_kind(LossKind::Focal, DEFAULT_GAMMA, &train.class_counts()).unwrap()
}

fn run(arch: Arch, seed: u64, epochs: usize, patience: Option<usize>, lr: f64) -> (Model, TrainOutcome) {
    let (vocab, train_set, val_set) = common::encoded_fixture(1);
    let mut rng = seeded(seed);
    let mut model = Model::new(small(arch, vocab.len()), &mut rng).unwrap();
    let opts = TrainOptions {
        epochs,
        batch_size: 16,
        patience,
    };
    let outcome = train(
        &mut model,
        &train_set,
        Some(&val_set),
        focal(&train_set),
        OptimConfig::new(OptimKind::AdamW, lr, 0.01),
        &opts,
        &mut rng,
    )
    .unwrap();
    (model, outcome)
}

fn flat(m: &Model) -> Vec<f32> {
    m.params.iter().flat_map(|p| p.value.data().to_vec()).collect()
}

#[test]
fn same_seed_same_records() {
    for arch in [Arch::Feedforward, Arch::Multiscale] {
        let (ma, a) = run(arch, 3, 3, None, 1e-3);
        let (mb, b) = run(arch, 3, 3, None, 1e-3);
        assert_eq!(a.records.len(), 3);
        assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_outcome(y)), "{arch}");
        assert_eq!(flat(&ma), flat(&mb), "{arch}");
        let (mc, _) = run(arch, 4, 3, None, 1e-3);
        assert_ne!(flat(&ma), flat(&mc), "{arch}");
    }
}

#[test]
fn one_epoch_gives_one_record() {
    let (model, out) = run(Arch::Cnn, 1, 1, Some(1), 1e-3);
    assert_eq!(out.records.len(), 1);
    assert!(!out.stopped_early);
    assert_eq!(out.best_epoch, Some(1));
    assert!(!model.is_training());
    let csv = curves_csv(&out.records);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with(CURVES_HEADER));
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (vocab, train_set, _) = common::encoded_fixture(1);
    let mut rng = seeded(5);
    let mut model: Model = Model::new(small(Arch::Transformer, vocab.len()), &mut rng).unwrap();
    model.eval();
    let before = flat(&model);
    let acc_before = evaluate(&model, &train_set, None).unwrap().accuracy;
    let opts = TrainOptions {
        epochs: 2,
        batch_size: 32,
        patience: None,
    };
    let out = train(
        &mut model,
        &train_set,
        None,
        focal(&train_set),
        OptimConfig::new(OptimKind::AdamW, 0.0, 0.01),
        &opts,
        &mut rng,
    )
    .unwrap();
    assert_eq!(flat(&model), before);
    assert_eq!(evaluate(&model, &train_set, None).unwrap().accuracy, acc_before);
    assert!(out.records.iter().all(|r| r.val_loss.is_none() && r.val_accuracy.is_none()));
    assert_eq!(out.best_epoch, None);
    assert!(curves_csv(&out.records).lines().nth(1).unwrap().starts_with("1,") );
}

#[test]
fn best_epoch_weights_are_restored() {
    let (vocab, train_set, val_set) = common::encoded_fixture(1);
    // a high learning rate makes validation loss rise after a few epochs
    let (model, out) = run(Arch::Feedforward, 7, 12, Some(3), 2e-2);
    let losses: Vec<f64> = out.records.iter().map(|r| r.val_loss.unwrap()).collect();
    let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_loss, Some(min));
    let best = out.best_epoch.unwrap();
    assert_eq!(losses[best - 1], min);
    if out.stopped_early {
        // stopped exactly `patience` epochs after the best one
        assert_eq!(out.records.len(), best + 3);
    }
    // the restored weights reproduce the best validation loss bit for bit
    let again = evaluate(&model, &val_set, Some(&focal(&train_set))).unwrap();
    assert_eq!(again.loss, Some(min));
    assert_eq!(vocab.len(), model.config.vocab_size);
}

#[test]
fn checkpoint_reproduces_validation_loss() {
    let (vocab, train_set, val_set) = common::encoded_fixture(1);
    let (model, _) = run(Arch::Multiscale, 2, 2, None, 1e-3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path, None, Some(vocab.hash()), Default::default()).unwrap();
    let (loaded, _) = Model::load(&path).unwrap();
    let crit = focal(&train_set);
    let a = evaluate(&model, &val_set, Some(&crit)).unwrap();
    let b = evaluate(&loaded, &val_set, Some(&crit)).unwrap();
    assert_eq!(a.loss.unwrap().to_bits(), b.loss.unwrap().to_bits());
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn feedforward_memorizes_a_small_subset() {
    let corpus = common::fixture();
    let subset = &corpus.train[..64];
    let vocab = emojinet::tokenizer::Vocabulary::build(subset, 1).unwrap();
    let set = EncodedSet::new(subset, &vocab, emojinet::tokenizer::MAX_LEN);
    let mut rng = seeded(0);
    let mut model: Model = Model::new(ModelConfig::new(Arch::Feedforward, vocab.len()), &mut rng).unwrap();
    let acc = overfit_probe(&mut model, &set, OptimConfig::new(OptimKind::Adam, 1e-3, 0.0), 16, 200, &mut rng).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn evaluation_is_independent_of_batching() {
    let (vocab, train_set, _) = common::encoded_fixture(1);
    let mut model: Model = Model::new(small(Arch::Cnn, vocab.len()), &mut seeded(1)).unwrap();
    model.eval();
    let crit = focal(&train_set);
    let whole = evaluate(&model, &train_set, Some(&crit)).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    let mut preds = Vec::new();
    for b in train_set.batches(7, None).unwrap() {
        let logits = model.logits(&b).unwrap();
        let (n, d) = crit.sums(logits.data(), &b.labels).unwrap();
        num += n;
        den += d;
        preds.extend(emojinet::metrics::predict_labels(logits.data(), 20));
    }
    assert_eq!(preds, whole.predictions);
    assert!((num / den - whole.loss.unwrap()).abs() < 1e-6);
}
