//! Slow-fast planar systems: entry-exit maps, blow-up transitions and
//! `eps ln eps` asymptotics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod blowup;
pub mod entryexit;
pub mod example5;
pub mod integrate;
pub mod quad;
pub mod system;
