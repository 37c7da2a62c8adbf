//! Central affine curve flow on the plane and the KdV hierarchy behind it.

pub mod backlund;
pub mod cli;
pub mod diffpoly;
pub mod flows;
pub mod geometry;
pub mod hamiltonian;
pub mod hierarchy;
pub mod numerics;
