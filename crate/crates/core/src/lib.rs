//! Graph-based surrogate models for 2D trusses.
//!
//! The crate covers the whole pipeline: parametric truss generators and a
//! direct-stiffness FEA solver produce displacement datasets, a small
//! reverse-mode autodiff engine trains FeaStNet-style graph networks on them,
//! and the experiment harness compares those networks (trained from scratch
//! or fine-tuned from another dataset) against random-forest and
//! mean-field baselines.

pub mod autodiff;
pub mod designgen;
pub mod error;
pub mod experiments;
pub mod fea;
pub mod formats;
pub mod gsm;
pub mod model;
pub mod pointwise;

pub use error::{Error, Result};
