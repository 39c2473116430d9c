//! Nondecreasing activation functions and the laws of their squared outputs
//! under a centred Gaussian pre-activation.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::special::std_normal_cdf;

/// A nondecreasing activation `φ`.
#[derive(Debug, Clone, Copy)]
pub enum Activation {
    Relu,
    Identity,
    LeakyRelu { slope: f64 },
    Tanh,
    /// `clamp(x, -1, 1)`.
    HardTanh,
    /// Forward map only. Laws involving it are estimated by sampling.
    Custom { name: &'static str, forward: fn(f64) -> f64 },
}

impl PartialEq for Activation {
    // custom activations compare by name
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Activation::LeakyRelu { slope: a }, Activation::LeakyRelu { slope: b }) => a == b,
            (Activation::Custom { name: a, .. }, Activation::Custom { name: b, .. }) => a == b,
            _ => core::mem::discriminant(self) == core::mem::discriminant(other),
        }
    }
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::HardTanh => "hard_tanh",
            Activation::Custom { name, .. } => name,
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, Activation::Relu)
    }

    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::HardTanh => x.clamp(-1.0, 1.0),
            Activation::Custom { forward, .. } => forward(x),
        }
    }

    /// Right-continuous generalized inverse `sup{t : φ(t) <= x}`, possibly
    /// infinite. `None` when the activation is not piecewise invertible.
    pub fn generalized_inverse(&self, x: f64) -> Option<f64> {
        Some(match *self {
            Activation::Relu => {
                if x >= 0.0 {
                    x
                } else {
                    f64::NEG_INFINITY
                }
            }
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    x / slope
                }
            }
            Activation::Tanh => {
                if x >= 1.0 {
                    f64::INFINITY
                } else if x <= -1.0 {
                    f64::NEG_INFINITY
                } else {
                    x.atanh()
                }
            }
            Activation::HardTanh => {
                if x >= 1.0 {
                    f64::INFINITY
                } else if x < -1.0 {
                    f64::NEG_INFINITY
                } else {
                    x
                }
            }
            Activation::Custom { .. } => return None,
        })
    }

    /// Left generalized inverse `inf{t : φ(t) >= x}`; differs from
    /// [`Self::generalized_inverse`] only on flat pieces of `φ`.
    pub fn lower_inverse(&self, x: f64) -> Option<f64> {
        match *self {
            Activation::Relu if x <= 0.0 => Some(f64::NEG_INFINITY),
            Activation::HardTanh if x <= -1.0 => Some(f64::NEG_INFINITY),
            Activation::HardTanh if x >= 1.0 => Some(if x > 1.0 { f64::INFINITY } else { 1.0 }),
            _ => self.generalized_inverse(x),
        }
    }

    /// Probability that `φ(h)² = 0` exactly for `h ~ N(0, σ²)`.
    /// `None` for activations handled by sampling.
    pub fn zero_mass_probability(&self, sigma: f64) -> Option<f64> {
        if sigma == 0.0 {
            return Some(if self.forward(0.0) == 0.0 { 1.0 } else { 0.0 });
        }
        match self {
            Activation::Relu => Some(0.5),
            Activation::Custom { .. } => None,
            _ => Some(0.0),
        }
    }

    /// `P(φ(h) <= x)` for `h ~ N(0, σ²)`, `σ > 0`.
    pub fn output_cdf(&self, x: f64, sigma: f64) -> Option<f64> {
        self.generalized_inverse(x).map(|t| std_normal_cdf(t / sigma))
    }

    /// `P(φ(h)² <= s)` for `h ~ N(0, σ²)`, `σ > 0`, `s > 0`.
    pub fn square_law_cdf(&self, s: f64, sigma: f64) -> Option<f64> {
        let r = s.sqrt();
        let upper = std_normal_cdf(self.generalized_inverse(r)? / sigma);
        let below = std_normal_cdf(self.lower_inverse(-r)? / sigma);
        Some((upper - below).clamp(0.0, 1.0))
    }
}
