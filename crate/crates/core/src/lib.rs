//! Pseudo-spectral solver and verification harness for a stochastic
//! Keller-Segel / Navier-Stokes system on the periodic torus.

pub mod spectral;
pub mod model;
pub mod noise;
pub mod dynamics;
pub mod diagnostics;
pub mod integrator;
pub mod harness;
