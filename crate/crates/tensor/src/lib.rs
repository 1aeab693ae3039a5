//! Dense tensors and a reverse-mode gradient tape.
//!
//! A [`Graph`] records each operation as it runs. Parameters live in a
//! [`ParamStore`] outside the graph and their gradients are collected into
//! a [`GradStore`], so one graph is built per training step and dropped
//! afterwards.
//!
//! ```
//! use tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::from_f64(&[2, 1], &[1.0, 2.0]).unwrap());
//! let w = g.constant(Tensor::from_f64(&[1, 2], &[3.0, 4.0]).unwrap());
//! let y = g.matmul(x, w).unwrap();
//! let loss = g.sum(y);
//! g.backward(loss, None).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[7.0, 7.0]);
//! ```

pub mod checkpoint;
mod element;
mod error;
pub mod gradcheck;
mod graph;
mod linalg;
pub mod nn;
mod ops;
mod params;
pub mod rng;
mod tensor;

pub use element::Element;
pub use error::{Result, TensorError};
pub use graph::{Backward, BackwardCtx, GradSink, Graph, Var};
pub use params::{GradStore, Param, ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::{Mask, Tensor};
