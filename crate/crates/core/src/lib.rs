//! Episodic variational objectives for few-shot generative models on
//! tractable one-dimensional families.
//!
//! The crate covers the whole loop: a small reverse-mode differentiator
//! ([`adiff`]), observation families ([`dists`]), class-structured synthetic
//! data ([`synthdata`]), linear encoders and decoders ([`model`]), the
//! objective family from the VAE through the Variational Homoencoder and its
//! structured extensions ([`objectives`]), Adam training with KL annealing
//! ([`train`]), oracle-certified evaluation metrics ([`eval`]), the property
//! suites behind `homoenc verify` ([`verify`]) and the command line ([`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiff;
pub mod cli;
pub mod dists;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod synthdata;
pub mod train;
pub mod verify;
