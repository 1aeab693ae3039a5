#![allow(dead_code)]

use rand::Rng as _;
use tensor::rng::{seeded, Rng};
use tensor::{Mask, Tensor};

pub fn rng(seed: u64) -> Rng {
    seeded(seed)
}

pub fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

pub fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero, for ops with a kink at zero.
pub fn rand_away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m: f64 = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Values whose pairwise gaps are much larger than a finite-difference step.
pub fn rand_distinct(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_fn(shape, |i| order[i] as f64 * 0.1 - 0.5 + rng.random_range(0.0..0.01))
}

/// Random post-padded mask with at least one real position per row.
pub fn rand_mask(rng: &mut Rng, batch: usize, len: usize) -> Mask {
    let lengths: Vec<usize> = (0..batch).map(|_| rng.random_range(1..=len)).collect();
    Mask::from_lengths(&lengths, len)
}
