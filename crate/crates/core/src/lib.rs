//! Adaptive high-gain backstepping for pseudo-affine pure-feedback systems.

pub mod autodiff;
pub mod backstep;
pub mod missile;
pub mod plant;
pub mod scenarios;
pub mod simkit;
pub mod verify;
