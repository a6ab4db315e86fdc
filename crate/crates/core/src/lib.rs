//! Offline reinforcement learning with implicit policies regularized by
//! state-action joint matching, and a tabular lab that checks the
//! visitation-matching results exactly.

// `!(x >= lo)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod ganjoint;
pub mod nets;
pub mod theorylab;
pub mod toybc;

/// Seed of an independent random stream derived from a master seed.
pub fn stream_seed(master: u64, stream: u64) -> u64 {
    master.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
