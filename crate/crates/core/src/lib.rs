//! Passive acoustic pinger localization: a synthetic rig, a software DSP
//! front-end, an octant guess from widely spaced hydrophones and a TDOA
//! least-squares solve for the pinger's bearing.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod geometry;
pub mod guess;
pub mod montecarlo;
pub mod pipeline;
pub mod recording;
pub mod simulator;
pub mod solver;
