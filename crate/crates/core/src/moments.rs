//! Closed-form moments of ReLU networks: expected squared norms through the
//! layers, conditional component moments and the final-layer summaries.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{domain, Result};
use crate::kernels::{pre_activation_std, LayerSpec};
use crate::operator::NetworkSpec;

/// `(π − 1) / (2π)`: variance of `relu(h)` for `h ~ N(0, 1)`.
pub const RELU_VARIANCE_FACTOR: f64 = (PI - 1.0) / (2.0 * PI);

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub x0_sq: f64,
    pub net: NetworkSpec,
    /// `E|x^(l)|²` for `l = 0..=L`.
    pub expected_sq_norms: Vec<f64>,
    /// Jensen upper bound on `E x_i^(L)`.
    pub final_mean_bound: f64,
    pub final_variance: f64,
}

fn relu_only(net: &NetworkSpec) -> Result<()> {
    net.validate()?;
    if net.layers.iter().any(|l| !l.activation.is_relu()) {
        return Err(domain("closed-form moments need ReLU layers"));
    }
    Ok(())
}

fn check_input(x0_sq: f64) -> Result<()> {
    if !(x0_sq >= 0.0) || !x0_sq.is_finite() {
        return Err(domain("input squared norm must be finite and nonnegative"));
    }
    Ok(())
}

/// Mean gain `N σ_w² / 2` of one layer.
pub fn mean_gain(layer: &LayerSpec) -> f64 {
    layer.width as f64 * layer.sigma_w * layer.sigma_w / 2.0
}

/// `E(|x^(l)|² | |x^(l−1)|² = y) = (σ_w² y + σ_b²) N / 2`.
pub fn conditional_sq_norm(layer: &LayerSpec, y: f64) -> f64 {
    layer.pre_activation_variance(y) * layer.width as f64 / 2.0
}

/// Expected squared norms by the one-step recursion, with final-layer summaries.
pub fn expected_sq_norm(net: &NetworkSpec, x0_sq: f64) -> Result<MomentReport> {
    relu_only(net)?;
    check_input(x0_sq)?;
    let mut norms = Vec::with_capacity(net.depth() + 1);
    norms.push(x0_sq);
    for layer in &net.layers {
        let prev = *norms.last().expect("nonempty");
        norms.push(conditional_sq_norm(layer, prev));
    }
    let (final_mean_bound, final_variance) = final_from(net, norms[net.depth() - 1]);
    Ok(MomentReport {
        x0_sq,
        net: net.clone(),
        expected_sq_norms: norms,
        final_mean_bound,
        final_variance,
    })
}

/// `E|x^(L)|²` from the expanded product-sum form:
/// `x0 Π_l g_l + Σ_l σ_{b,l}² N_l/2 Π_{n>l} g_n` with `g = N σ_w² / 2`.
pub fn expected_sq_norm_closed_form(net: &NetworkSpec, x0_sq: f64) -> Result<f64> {
    relu_only(net)?;
    check_input(x0_sq)?;
    let gains: Vec<f64> = net.layers.iter().map(mean_gain).collect();
    let tail = |from: usize| gains[from..].iter().product::<f64>();
    let mut total = x0_sq * tail(0);
    for (l, layer) in net.layers.iter().enumerate() {
        total += layer.sigma_b * layer.sigma_b * layer.width as f64 / 2.0 * tail(l + 1);
    }
    Ok(total)
}

/// Mean and variance of one component given the previous squared norm `y`.
pub fn component_moments(layer: &LayerSpec, y: f64) -> Result<(f64, f64)> {
    if !layer.activation.is_relu() {
        return Err(domain("closed-form moments need ReLU layers"));
    }
    let sigma = pre_activation_std(layer, y)?;
    Ok((sigma / (2.0 * PI).sqrt(), RELU_VARIANCE_FACTOR * sigma * sigma))
}

fn final_from(net: &NetworkSpec, e_prev: f64) -> (f64, f64) {
    let last = net.layers.last().expect("validated");
    let var = last.pre_activation_variance(e_prev);
    (var.sqrt() / (2.0 * PI).sqrt(), RELU_VARIANCE_FACTOR * var)
}

/// Jensen bound `√(σ_{w,L}² E|x^(L−1)|² + σ_{b,L}²) / √(2π)` on the mean of a
/// final-layer component, and the final-layer variance
/// `(π − 1)/(2π) (σ_{w,L}² E|x^(L−1)|² + σ_{b,L}²)`.
pub fn final_component_bound(net: &NetworkSpec, x0_sq: f64) -> Result<(f64, f64)> {
    let report = expected_sq_norm(net, x0_sq)?;
    Ok((report.final_mean_bound, report.final_variance))
}

/// First-layer weight scale that makes a bias-free two-layer chain
/// norm-preserving in expectation: `2 / (σ_{w,2} √(N_1 N_2))`.
pub fn compensating_sigma(n1: usize, n2: usize, sigma_w2: f64) -> Result<f64> {
    if n1 == 0 || n2 == 0 {
        return Err(domain("widths must be positive"));
    }
    if !(sigma_w2 > 0.0) || !sigma_w2.is_finite() {
        return Err(domain("sigma_w2 must be finite and positive"));
    }
    Ok(2.0 / (sigma_w2 * ((n1 * n2) as f64).sqrt()))
}
