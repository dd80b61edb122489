//! Boundedness and splitting checks for Volterra operators with degenerate
//! kernels acting between weighted `L2` spaces on the half line.

pub mod numerics;
pub mod criteria;
pub mod multipliers;
pub mod operators;
pub mod orthopoly;
pub mod weights;
