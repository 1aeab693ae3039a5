mod common;

use std::fs;

use emojinet::corpus::{
    batch_order, class_counts, load_tsv, make_batches, write_tsv, Example, LabelSet, Split, SplitCorpus,
    NUM_CLASSES,
};
use emojinet::tokenizer::{Vocabulary, MAX_LEN, PAD};
use emojinet::tensor::rng::seeded;
use emojinet::Error;
use proptest::prelude::*;

fn load_str(text: &str) -> emojinet::Result<Vec<Example>> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.tsv");
    fs::write(&path, text).unwrap();
    load_tsv(&path, &LabelSet::default())
}

#[test]
fn tsv_lines_map_to_examples_in_order() {
    let examples = load_str("I love this\t0\n\nsecond one\t19\r\nthird\t7\n").unwrap();
    assert_eq!(
        examples,
        vec![
            Example::new("I love this", 0),
            Example::new("second one", 19),
            Example::new("third", 7),
        ]
    );
}

#[test]
fn malformed_lines_name_their_line_number() {
    let cases = [
        ("ok\t1\nbad label\t20\n", 2, "out of range"),
        ("ok\t1\nok\t2\nno tab here\n", 3, "tab"),
        ("two\ttabs\t3\n", 1, "tab"),
        ("text\tx\n", 1, "integer"),
        ("text\t-1\n", 1, "integer"),
        ("  \t4\n", 1, "empty text"),
    ];
    for (text, want_line, fragment) in cases {
        match load_str(text) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, want_line, "{text:?}");
                assert!(msg.contains(fragment), "{msg}");
            }
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let err = load_str("a\t99\n").unwrap_err().to_string();
    assert!(err.contains(":1:"), "{err}");
}

#[test]
fn empty_and_missing_files_are_errors() {
    assert!(matches!(load_str(""), Err(Error::EmptyFile(_))));
    assert!(matches!(load_str("\n  \n"), Err(Error::EmptyFile(_))));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_tsv(&dir.path().join("nope.tsv"), &LabelSet::default()),
        Err(Error::Io { .. })
    ));
    assert!(SplitCorpus::load(dir.path()).is_err());
}

#[test]
fn label_file_must_match_canonical_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.txt");
    LabelSet::default().save(&path).unwrap();
    assert_eq!(LabelSet::load(&path).unwrap(), LabelSet::default());
    let mut text = fs::read_to_string(&path).unwrap();
    text = text.replacen(":heart:\n", ":joy:\n", 1);
    fs::write(&path, text).unwrap();
    assert!(LabelSet::load(&path).is_err());
}

#[test]
fn class_counts_tally_labels() {
    let ex = [Example::new("a", 0), Example::new("b", 0), Example::new("c", 1)];
    let counts = class_counts(&ex);
    assert_eq!(counts[0], 2);
    assert_eq!(counts[1], 1);
    assert_eq!(counts.iter().sum::<usize>(), 3);
    assert_eq!(class_counts(&[]), [0; NUM_CLASSES]);
}

#[test]
fn ten_examples_in_batches_of_four() {
    let examples: Vec<Example> = (0..10).map(|i| Example::new(format!("w{i}"), i % 20)).collect();
    let vocab = Vocabulary::build(&examples, 1).unwrap();
    let batches = make_batches(&examples, &vocab, 4, None).unwrap();
    let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
    assert_eq!(sizes, [4, 4, 2]);
    let labels: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
    assert_eq!(labels, (0..10).collect::<Vec<_>>());
    assert!(make_batches(&examples, &vocab, 0, None).is_err());

    let a = make_batches(&examples, &vocab, 3, Some(9)).unwrap();
    let b = make_batches(&examples, &vocab, 3, Some(9)).unwrap();
    let flat = |bs: &[emojinet::corpus::EncodedBatch]| bs.iter().flat_map(|b| b.token_ids.clone()).collect::<Vec<_>>();
    assert_eq!(flat(&a), flat(&b));
}

#[test]
fn full_train_split_batch_count() {
    let order = batch_order(45_000, 32, None).unwrap();
    assert_eq!(order.len(), 1407);
    assert_eq!(order.last().unwrap().len(), 8);
    assert!(order[..1406].iter().all(|b| b.len() == 32));
}

#[test]
fn batches_force_padding_beyond_length() {
    let examples = vec![Example::new("a b c", 0), Example::new("a", 1)];
    let vocab = Vocabulary::build(&examples, 1).unwrap();
    let batch = &make_batches(&examples, &vocab, 2, None).unwrap()[0];
    assert_eq!(batch.lengths, [3, 1]);
    for min_len in [1, 3, 5] {
        let (ids, mask) = batch.trimmed(min_len);
        let len = 3.max(min_len);
        assert_eq!(mask.len(), len);
        assert_eq!(ids.len(), 2 * len);
        for b in 0..2 {
            for p in 0..len {
                assert_eq!(mask.get(b, p), p < batch.lengths[b]);
                if !mask.get(b, p) {
                    assert_eq!(ids[b * len + p], PAD);
                }
            }
        }
    }
}

#[test]
fn bundled_fixture_is_complete() {
    let corpus = common::fixture();
    corpus.validate().unwrap();
    assert_eq!(corpus.train.len(), 120);
    assert_eq!(corpus.validation.len(), 30);
    assert_eq!(corpus.test.len(), 50);
    for split in Split::ALL {
        assert!(corpus.class_counts(split).iter().all(|&c| c > 0), "{}", split.name());
    }
    assert_eq!("val".parse::<Split>().unwrap(), Split::Validation);
}

#[test]
fn missing_train_label_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::fixture();
    let without: Vec<Example> = corpus.train.iter().filter(|e| e.label != 4).cloned().collect();
    write_tsv(&dir.path().join("train.tsv"), &without).unwrap();
    write_tsv(&dir.path().join("validation.tsv"), &corpus.validation).unwrap();
    write_tsv(&dir.path().join("test.tsv"), &corpus.test).unwrap();
    let reloaded = SplitCorpus::load(dir.path()).unwrap();
    assert_eq!(reloaded.missing_train_labels(), [4]);
    let err = reloaded.validate().unwrap_err().to_string();
    assert!(err.contains(":fire:"), "{err}");
}

fn example_strategy() -> impl Strategy<Value = Example> {
    ("[^\\s]{1,3}[^\\r\\n]{0,40}", 0..NUM_CLASSES)
        .prop_map(|(text, label)| Example::new(text.replace('\t', " "), label))
}

proptest! {
    #[test]
    fn tsv_round_trip(examples in prop::collection::vec(example_strategy(), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.tsv");
        write_tsv(&path, &examples).unwrap();
        let back = load_tsv(&path, &LabelSet::default()).unwrap();
        prop_assert_eq!(back, examples);
    }

    #[test]
    fn shuffled_epoch_covers_every_example_once(n in 0usize..200, bs in 1usize..40, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let order = batch_order(n, bs, Some(&mut rng)).unwrap();
        let mut seen: Vec<usize> = order.iter().flatten().copied().collect();
        prop_assert_eq!(order.len(), n.div_ceil(bs));
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let again = batch_order(n, bs, Some(&mut seeded(seed))).unwrap();
        prop_assert_eq!(order, again);
    }

    #[test]
    fn class_counts_ignore_order(labels in prop::collection::vec(0..NUM_CLASSES, 0..60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut examples: Vec<Example> = labels.iter().map(|&l| Example::new("x", l)).collect();
        let before = class_counts(&examples);
        examples.shuffle(&mut seeded(seed));
        prop_assert_eq!(class_counts(&examples), before);
        prop_assert_eq!(before.iter().sum::<usize>(), labels.len());
    }
}

#[test]
fn encoded_set_matches_tokenizer() {
    let (vocab, train, _) = common::encoded_fixture(2);
    let corpus = common::fixture();
    assert_eq!(train.len(), corpus.train.len());
    assert_eq!(train.max_len, MAX_LEN);
    for (i, ex) in corpus.train.iter().enumerate().take(10) {
        let enc = vocab.encode(&ex.text, MAX_LEN);
        assert_eq!(&train.ids[i * MAX_LEN..(i + 1) * MAX_LEN], &enc.ids[..]);
        assert_eq!(train.lengths[i], enc.length);
    }
    assert_eq!(train.prefix(7).len(), 7);
    assert_eq!(train.prefix(10_000).len(), train.len());
}
