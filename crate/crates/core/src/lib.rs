//! Layer-by-layer laws of the squared norm of hidden activations in wide
//! random fully-connected networks.
//!
//! The law of `z_l = ||x_l||²` evolves by a linear transition operator whose
//! kernel depends on the layer width, the weight and bias scales and the
//! activation. This crate discretizes that operator on a uniform grid, applies
//! it, studies its spectrum on power functions `y^m`, computes exact moments
//! and checks everything against direct Monte Carlo simulation.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod activation;
pub mod distributions;
pub mod error;
pub mod fft;
pub mod kernels;
pub mod krylov;
pub mod moments;
pub mod montecarlo;
pub mod operator;
pub mod special;
pub mod spectral;

pub use activation::Activation;
pub use distributions::{empirical_density, Grid, MixedDensity, PointMass};
pub use error::{Error, Result};
pub use kernels::{generic_kernel_row, kernel_matrix, pre_activation_std, relu_kernel_row, ConditionalKernel, LayerSpec};
pub use operator::{apply, apply_function, component_cdf, propagate, LayerSummary, NetworkSpec, PropagationTrace};
pub use spectral::{discretized_spectrum, m_crit, relu_eigenvalue, sweep, Prefactor, SpectrumReport};
pub use moments::{compensating_sigma, component_moments, expected_sq_norm, final_component_bound, MomentReport};
pub use montecarlo::{empirical_component_cdf, sample_ensemble, InputSource, McConfig, McRun};
