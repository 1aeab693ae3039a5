//! Differentiable operations. Each is a method on [`Graph`](crate::Graph)
//! that computes its output eagerly and records a backward rule.

mod attention;
mod conv;
mod elementwise;
mod linalg;
mod norm;
mod sequence;

use crate::error::{Result, TensorError};

pub(crate) fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn expect_rank(op: &'static str, shape: &[usize], rank: usize) -> Result<()> {
    if shape.len() != rank {
        return Err(TensorError::InvalidShape {
            op,
            msg: format!("expected rank {rank}, got shape {shape:?}"),
        });
    }
    Ok(())
}
