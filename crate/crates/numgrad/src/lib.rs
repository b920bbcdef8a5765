//! A small dense-array engine with reverse-mode differentiation.
//!
//! Values live in [`Tensor`]s; a [`Tape`] records operations on them and
//! [`Tape::backward`] returns [`Gradients`] for every differentiable input.
//! Trainable tensors are kept in a [`ParamStore`] and updated by [`Adam`].
//!
//! ```
//! use numgrad::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::<f64>::new();
//! let x = store.add("x", Tensor::scalar(3.0));
//! let mut tape = Tape::new();
//! let xv = tape.param(&store, x);
//! let loss = tape.square(xv);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.param(&store, x).item(), 6.0);
//! ```

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod sparse;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NumError, Result};
pub use gradcheck::finite_diff_check;
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use scalar::{DType, Real};
pub use sparse::CsrMatrix;
pub use tape::{Axis, Gradients, Tape, Var};
pub use tensor::Tensor;
