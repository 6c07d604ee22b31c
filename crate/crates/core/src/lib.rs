//! Learning representations that lead people to good decisions.
//!
//! The crate bundles a small reverse-mode autodiff core ([`tape`], [`nn`],
//! [`optim`]), the alternating human-in-the-loop procedure ([`mom`]) and three
//! instantiations of it: scatterplot projections ([`pointcloud`]), a
//! side-information simulation ([`sideinfo`]) and loan avatars ([`loanrep`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blr;
pub mod error;
pub mod gradcheck;
pub mod histogram;
pub mod loanrep;
pub mod mom;
pub mod nn;
pub mod optim;
pub mod pointcloud;
pub mod sideinfo;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
