#![allow(dead_code)]

pub mod tables;

use std::path::PathBuf;

use emojinet::corpus::{EncodedSet, SplitCorpus};
use emojinet::tokenizer::{Vocabulary, MAX_LEN};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fixture")
}

pub fn fixture() -> SplitCorpus {
    SplitCorpus::load(&fixture_dir()).expect("bundled fixture loads")
}

/// Fixture train/validation splits encoded with a vocabulary built on
/// train at `min_freq`.
pub fn encoded_fixture(min_freq: usize) -> (Vocabulary, EncodedSet, EncodedSet) {
    let corpus = fixture();
    let vocab = Vocabulary::build(&corpus.train, min_freq).unwrap();
    let train = EncodedSet::new(&corpus.train, &vocab, MAX_LEN);
    let val = EncodedSet::new(&corpus.validation, &vocab, MAX_LEN);
    (vocab, train, val)
}
