//! Direct simulation of the random network ensemble: fresh Gaussian weights
//! and biases for every sample, explicit forward passes, recorded squared
//! norms. Serves as ground truth for the operator and the closed forms.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;

use crate::error::{domain, Error, Result};
use crate::operator::NetworkSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub net: NetworkSpec,
    pub n_samples: usize,
    pub seed: u64,
    /// Record the first component of the final layer.
    pub record_components: bool,
    /// Record squared norms at every layer `0..=L`, not just the last.
    pub record_all_layers: bool,
}

impl McConfig {
    pub fn new(net: NetworkSpec, n_samples: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            net,
            n_samples,
            seed,
            record_components: false,
            record_all_layers: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_components(mut self) -> Self {
        self.record_components = true;
        self
    }

    pub fn with_all_layers(mut self) -> Self {
        self.record_all_layers = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(domain("n_samples must be positive"));
        }
        self.net.validate()
    }
}

/// Network inputs. Only the squared norm of the input matters for the
/// ensemble law, so norm-only sources use the representative `√z e_1`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// The same input vector for every sample.
    Vector(Vec<f64>),
    /// A fixed squared norm.
    SquaredNorm(f64),
    /// Sample `i` uses squared norm `i mod len`.
    SquaredNorms(Vec<f64>),
}

impl InputSource {
    fn validate(&self, input_width: usize) -> Result<()> {
        let ok = |z: &f64| *z >= 0.0 && z.is_finite();
        match self {
            InputSource::Vector(v) if v.len() != input_width => Err(domain("input vector length differs from input width")),
            InputSource::Vector(v) if v.iter().any(|x| !x.is_finite()) => Err(domain("input vector must be finite")),
            InputSource::SquaredNorm(z) if !ok(z) => Err(domain("squared norm must be finite and nonnegative")),
            InputSource::SquaredNorms(zs) if zs.is_empty() || !zs.iter().all(ok) => {
                Err(domain("squared norms must be a nonempty list of finite nonnegative values"))
            }
            _ => Ok(()),
        }
    }

    fn vector(&self, sample: usize, input_width: usize) -> Vec<f64> {
        let rep = |z: f64| {
            let mut v = vec![0.0; input_width];
            v[0] = z.sqrt();
            v
        };
        match self {
            InputSource::Vector(v) => v.clone(),
            InputSource::SquaredNorm(z) => rep(*z),
            InputSource::SquaredNorms(zs) => rep(zs[sample % zs.len()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub config: McConfig,
    /// Indexed by layer `0..=L` when all layers are recorded, otherwise a
    /// single entry for layer `L`.
    pub sq_norms: Vec<Vec<f64>>,
    pub components: Option<Vec<f64>>,
    /// Seconds; not part of the deterministic output.
    pub wall_time: Option<f64>,
}

impl McRun {
    pub fn final_sq_norms(&self) -> &[f64] {
        self.sq_norms.last().expect("at least one layer recorded")
    }

    /// Samples of `|x^(l)|²`, if recorded.
    pub fn layer_sq_norms(&self, layer: usize) -> Option<&[f64]> {
        if self.config.record_all_layers {
            self.sq_norms.get(layer).map(Vec::as_slice)
        } else if layer == self.config.net.depth() {
            Some(self.final_sq_norms())
        } else {
            None
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream for one (sample, layer) pair.
pub fn substream_seed(seed: u64, sample: u64, layer: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ sample) ^ layer)
}

struct SampleOut {
    norms: Vec<f64>,
    component: Option<f64>,
}

fn forward(cfg: &McConfig, input: &InputSource, sample: usize) -> SampleOut {
    let net = &cfg.net;
    let mut x = input.vector(sample, net.input_width);
    let mut norms = Vec::with_capacity(if cfg.record_all_layers { net.depth() + 1 } else { 1 });
    if cfg.record_all_layers {
        norms.push(x.iter().map(|v| v * v).sum());
    }
    let mut active: Vec<f64> = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        // zero inputs contribute nothing, so their weights are never drawn
        active.clear();
        active.extend(x.iter().copied().filter(|v| *v != 0.0));
        let mut next = Vec::with_capacity(layer.width);
        let mut rng = Pcg64Mcg::seed_from_u64(substream_seed(cfg.seed, sample as u64, l as u64 + 1));
        for _ in 0..layer.width {
            let mut h = 0.0;
            for &v in &active {
                let w: f64 = rng.sample(StandardNormal);
                h += w * v;
            }
            let b: f64 = if layer.sigma_b > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            next.push(layer.activation.forward(layer.sigma_w * h + layer.sigma_b * b));
        }
        x = next;
        if cfg.record_all_layers {
            norms.push(x.iter().map(|v| v * v).sum());
        }
    }
    if !cfg.record_all_layers {
        norms.push(x.iter().map(|v| v * v).sum());
    }
    SampleOut {
        norms,
        component: cfg.record_components.then(|| x[0]),
    }
}

/// Draws `cfg.n_samples` networks and forward passes. Output is identical for
/// any degree of parallelism.
pub fn sample_ensemble(cfg: &McConfig, input: &InputSource) -> Result<McRun> {
    cfg.validate()?;
    input.validate(cfg.net.input_width)?;
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();

    #[cfg(feature = "std")]
    let outs: Vec<SampleOut> = {
        use rayon::prelude::*;
        (0..cfg.n_samples).into_par_iter().map(|s| forward(cfg, input, s)).collect()
    };
    #[cfg(not(feature = "std"))]
    let outs: Vec<SampleOut> = (0..cfg.n_samples).map(|s| forward(cfg, input, s)).collect();

    let n_layers = if cfg.record_all_layers { cfg.net.depth() + 1 } else { 1 };
    let mut sq_norms = vec![Vec::with_capacity(cfg.n_samples); n_layers];
    let mut components = cfg.record_components.then(|| Vec::with_capacity(cfg.n_samples));
    for out in outs {
        for (dst, v) in sq_norms.iter_mut().zip(out.norms) {
            dst.push(v);
        }
        if let (Some(c), Some(v)) = (components.as_mut(), out.component) {
            c.push(v);
        }
    }

    #[cfg(feature = "std")]
    let wall_time = Some(start.elapsed().as_secs_f64());
    #[cfg(not(feature = "std"))]
    let wall_time = None;

    Ok(McRun {
        config: cfg.clone(),
        sq_norms,
        components,
        wall_time,
    })
}

/// Fraction of recorded final-layer components `<= x`.
pub fn empirical_component_cdf(run: &McRun, x: f64) -> Result<f64> {
    let c = run
        .components
        .as_ref()
        .ok_or_else(|| Error::State("components were not recorded".into()))?;
    Ok(c.iter().filter(|&&v| v <= x).count() as f64 / c.len() as f64)
}

/// Sample mean and its standard error.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance and its approximate standard error
/// `sqrt((m4 − s⁴ (n−3)/(n−1)) / n)`.
pub fn variance_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.len() < 4 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// Fraction of exact zeros and its binomial standard error.
pub fn zero_fraction_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let p = samples.iter().filter(|&&v| v == 0.0).count() as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

/// Kolmogorov–Smirnov statistic between samples and a CDF, checking both
/// sides of every jump of the empirical CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let below = v.next_down();
        worst = worst.max((cdf(below) - i as f64 / n).abs());
        worst = worst.max((cdf(v) - j as f64 / n).abs());
        i = j;
    }
    worst
}
