//! Linear spectral statistics of Wigner matrices: ensembles, fluctuation
//! functionals, Littlewood-Paley bands, Dyson Brownian motion, exact
//! Gaussian-ensemble kernels and a Monte Carlo harness tying them together.
//!
//! Numerical kernels are generic over [`scalar::Real`]; the aliases below fix
//! the common `f64` instantiations.

pub mod bandlimits;
pub mod dbm;
pub mod ensembles;
pub mod error;
pub mod functionals;
pub mod gausskernels;
pub mod harness;
pub mod linalg;
pub mod quad;
pub mod scalar;
pub mod spectra;
pub mod stats;
pub mod testfn;

pub use error::{Error, Result};

pub type ComplexEnergy = spectra::ComplexEnergy<f64>;
pub type SemicircleQuantiles = spectra::SemicircleQuantiles<f64>;
pub type ControlParams = spectra::ControlParams<f64>;
pub type CumulantPair = functionals::CumulantPair<f64>;
pub type ChebyshevSeries = functionals::ChebyshevSeries<f64>;
pub type VarianceV = functionals::VarianceV<f64>;
pub type ExpectationE = functionals::ExpectationE<f64>;
pub type ClosedForm = testfn::ClosedForm<f64>;
