//! Neural-network surrogates for the parameter-to-trajectory map of
//! parametric ODE and index-1 DAE systems.
//!
//! The pipeline: sample parameters in a box, integrate each initial value
//! problem with an adaptive BDF method, sample a scalar quantity of interest
//! on a uniform time grid, fit a feedforward network to the resulting
//! `(parameters, trajectory)` pairs and measure relative errors.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the double-precision instantiation used by the
//! file formats and the command line front-end.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod dynsys;
pub mod evaluation;
pub mod integrator;
pub mod linalg;
pub mod neuralnet;
pub mod scalar;
pub mod training;

pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Circuit = dynsys::VoltageDoubler<f64>;
pub type Parameters = dynsys::ParameterVector<f64>;
pub type Domain = dynsys::ParameterDomain<f64>;
pub type Grid = integrator::TimeGrid<f64>;
pub type Tolerances = integrator::ToleranceSettings<f64>;
pub type Path = integrator::SolutionPath<f64>;
pub type Samples = dataset::SampleSet<f64>;
pub type Network = neuralnet::NetworkParams<f64>;
pub type Scaling = neuralnet::Normalizer<f64>;
pub type Model = neuralnet::Surrogate<f64>;
