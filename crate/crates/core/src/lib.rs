//! Simulation of a rotating two-degree-of-freedom cut-out-beam piezoelectric
//! energy harvester: rotation-dependent modal analysis, a reduced two-mode
//! electromechanical model, stopper and magnet force plugins, and stepped
//! frequency sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod forces;
pub mod geometry;
pub mod modal;
pub mod ode;
pub mod quadrature;
pub mod reduced;
pub mod scenario;
pub mod simulate;
pub mod units;
