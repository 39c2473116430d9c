//! Eigenvalues of the ReLU transition operator on power functions `y^m`
//! (bias-free layers), the critical exponent where the eigenvalue equals one,
//! and numerical spectra of the discretized operator.
//!
//! With `σ_b = 0` the substitution `u = z / (σ_w² y)` turns
//! `∫ k(y, z) y^m dy` into `z^m σ_w^{-(2m+2)} E[U^{-m-1}]` for each
//! chi-squared component, and `E[U^s] = 2^s Γ(k/2 + s) / Γ(k/2)`. Hence
//!
//! ```text
//! λ_m = 0.5^{N+m+1} σ_w^{-(2m+2)} Σ_k C(N,k) Γ(k/2 − m − 1) / Γ(k/2),   m < −1/2.
//! ```

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::distributions::MixedDensity;
use crate::error::{domain, Error, Result};
use crate::kernels::{ConditionalKernel, LayerSpec};
use crate::krylov::{krylov_schur, EigenPair, KrylovOptions};
use crate::operator::{apply_function, NetworkSpec};
use crate::special::{log_binomial, log_gamma, log_sum_exp};

/// Tolerance on `m` for the critical-exponent root.
pub const M_CRIT_TOL: f64 = 1e-10;

/// Lower limit of the bracket search for the critical exponent.
pub const M_CRIT_SEARCH_LIMIT: f64 = -1e4;

/// Power-of-one-half prefactor of the eigenvalue formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prefactor {
    /// `0.5^{N+m+1}`, from the chi-squared moment `E[U^s] = 2^s Γ(k/2+s)/Γ(k/2)`.
    #[default]
    HalfPowNPlusM,
    /// `0.5^{N−m−1}`, the sign-flipped variant found in some derivations.
    /// Agrees with the other form only at `m = −1`.
    HalfPowNMinusM,
}

/// `λ_m` of a bias-free ReLU layer.
pub fn relu_eigenvalue(width: usize, sigma_w: f64, m: f64) -> Result<f64> {
    relu_eigenvalue_with(width, sigma_w, m, Prefactor::default())
}

pub fn relu_eigenvalue_with(width: usize, sigma_w: f64, m: f64, prefactor: Prefactor) -> Result<f64> {
    log_relu_eigenvalue(width, sigma_w, m, prefactor).map(f64::exp)
}

fn log_relu_eigenvalue(width: usize, sigma_w: f64, m: f64, prefactor: Prefactor) -> Result<f64> {
    if width == 0 {
        return Err(domain("width must be positive"));
    }
    if !(sigma_w > 0.0) || !sigma_w.is_finite() {
        return Err(domain("sigma_w must be finite and positive"));
    }
    if !(m < -0.5) {
        return Err(domain("eigenvalue formula requires m < -1/2"));
    }
    let n = width as u64;
    let terms = (1..=n)
        .map(|k| {
            let half = 0.5 * k as f64;
            Ok(log_binomial(n, k)? + log_gamma(half - m - 1.0)? - log_gamma(half)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let half_power = match prefactor {
        Prefactor::HalfPowNPlusM => width as f64 + m + 1.0,
        Prefactor::HalfPowNMinusM => width as f64 - m - 1.0,
    };
    Ok(half_power * 0.5f64.ln() - (2.0 * m + 2.0) * sigma_w.ln() + log_sum_exp(&terms))
}

/// Root in `m < −1` of the log-eigenvalue `g`. `g(−1) = ln(1 − 0.5^N) < 0`
/// always holds but rounds to zero for wide layers, so it is not evaluated.
/// The bracket grows from `−2` by doubling.
fn critical_root(g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut hi = -1.0;
    let mut lo = -2.0;
    while g(lo)? < 0.0 {
        hi = lo;
        lo *= 2.0;
        if lo < M_CRIT_SEARCH_LIMIT {
            return Err(Error::NoRoot {
                lower: M_CRIT_SEARCH_LIMIT,
                upper: -1.0,
            });
        }
    }
    while hi - lo > M_CRIT_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exponent `m_crit < −1` with `λ(m_crit) = 1`.
pub fn m_crit(width: usize, sigma_w: f64) -> Result<f64> {
    m_crit_with(width, sigma_w, Prefactor::default())
}

pub fn m_crit_with(width: usize, sigma_w: f64, prefactor: Prefactor) -> Result<f64> {
    critical_root(|m| log_relu_eigenvalue(width, sigma_w, m, prefactor))
}

fn bias_free_relu(net: &NetworkSpec) -> Result<()> {
    net.validate()?;
    if net.layers.iter().any(|l| !l.activation.is_relu() || l.sigma_b != 0.0) {
        return Err(domain("stationarity product needs bias-free ReLU layers"));
    }
    Ok(())
}

/// `Π_l λ_{l,m}` over the layers of a bias-free ReLU network.
pub fn multi_layer_stationarity(net: &NetworkSpec, m: f64) -> Result<f64> {
    log_stationarity(net, m).map(f64::exp)
}

fn log_stationarity(net: &NetworkSpec, m: f64) -> Result<f64> {
    bias_free_relu(net)?;
    net.layers
        .iter()
        .map(|l| log_relu_eigenvalue(l.width, l.sigma_w, m, Prefactor::default()))
        .sum()
}

/// Exponent at which the eigenvalue product of the whole network equals one.
pub fn network_m_crit(net: &NetworkSpec) -> Result<f64> {
    bias_free_relu(net)?;
    critical_root(|m| log_stationarity(net, m))
}

/// Least-squares line `y = slope·x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(domain("line fit needs at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(domain("line fit needs distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Eigenvalue curve of one layer, optionally with the discretized spectrum.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub layer: LayerSpec,
    pub m_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub m_crit: f64,
    pub discretized_eigenvalues: Option<Vec<Complex64>>,
    pub discretized_dominant_eigenvector: Option<MixedDensity>,
}

/// Tabulates `λ_m` at `n_samples` equally spaced `m` in `[m_lo, m_hi]`.
pub fn sweep(width: usize, sigma_w: f64, m_lo: f64, m_hi: f64, n_samples: usize) -> Result<SpectrumReport> {
    if !(m_lo < m_hi) || n_samples < 2 {
        return Err(domain("m range must be nonempty with at least two samples"));
    }
    if !(m_hi < -0.5) {
        return Err(domain("m range must lie below -1/2"));
    }
    let layer = LayerSpec::relu(width, sigma_w, 0.0)?;
    let m_values: Vec<f64> = (0..n_samples)
        .map(|i| m_lo + (m_hi - m_lo) * i as f64 / (n_samples - 1) as f64)
        .collect();
    let lambda_values = m_values
        .iter()
        .map(|&m| relu_eigenvalue(width, sigma_w, m))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectrumReport {
        layer,
        m_values,
        lambda_values,
        m_crit: m_crit(width, sigma_w)?,
        discretized_eigenvalues: None,
        discretized_dominant_eigenvector: None,
    })
}

impl SpectrumReport {
    /// Attaches the leading eigenvalues of a discretized kernel.
    pub fn with_discretized(mut self, kernel: &ConditionalKernel, top_k: usize) -> Result<Self> {
        let spec = discretized_spectrum(kernel, top_k)?;
        self.discretized_eigenvalues = Some(spec.pairs.iter().map(|p| p.value).collect());
        self.discretized_dominant_eigenvector = spec.dominant_density;
        Ok(self)
    }
}

/// Leading eigenpairs of the discretized operator.
#[derive(Debug, Clone)]
pub struct DiscretizedSpectrum {
    /// Eigenvectors are in mass coordinates: entry 0 is the atom, entry
    /// `i + 1` the mass of cell `i`.
    pub pairs: Vec<EigenPair>,
    /// Dominant eigenvector as a unit-mass law, when it is real and nonnegative.
    pub dominant_density: Option<MixedDensity>,
}

/// Mass-coordinate operator `s ↦ Kᵀ s` on the `n_points + 1` states.
fn kernel_action(kernel: &ConditionalKernel, x: &[Complex64], y: &mut [Complex64]) {
    let step = kernel.grid().step();
    let n = kernel.grid().n_points();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    let mut atom = Complex64::new(0.0, 0.0);
    for (i, s) in x.iter().enumerate() {
        if s.re == 0.0 && s.im == 0.0 {
            continue;
        }
        atom += s * kernel.row_atom(i);
        let (a, b) = (s.re * step, s.im * step);
        for ((r, m), d) in re.iter_mut().zip(im.iter_mut()).zip(kernel.row_density(i)) {
            *r += a * d;
            *m += b * d;
        }
    }
    y[0] = atom;
    for (j, out) in y[1..].iter_mut().enumerate() {
        *out = Complex64::new(re[j], im[j]);
    }
}

/// Leading `top_k` eigenvalues by modulus of the `(n_points + 1)`-state
/// discretized operator, by Krylov–Schur iteration.
pub fn discretized_spectrum(kernel: &ConditionalKernel, top_k: usize) -> Result<DiscretizedSpectrum> {
    discretized_spectrum_with(kernel, top_k, KrylovOptions::default())
}

pub fn discretized_spectrum_with(kernel: &ConditionalKernel, top_k: usize, opts: KrylovOptions) -> Result<DiscretizedSpectrum> {
    if top_k == 0 {
        return Err(domain("top_k must be positive"));
    }
    let dim = kernel.n_rows();
    let pairs = krylov_schur(dim, top_k, |x, y| kernel_action(kernel, x, y), opts)?;
    let dominant_density = pairs.first().and_then(|p| as_density(kernel, p));
    Ok(DiscretizedSpectrum {
        pairs,
        dominant_density,
    })
}

fn as_density(kernel: &ConditionalKernel, pair: &EigenPair) -> Option<MixedDensity> {
    if pair.value.im.abs() > 1e-10 * pair.value.norm().max(1e-300) {
        return None;
    }
    let pivot = pair
        .vector
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
    let phase = pivot / pivot.norm();
    let v: Vec<Complex64> = pair.vector.iter().map(|x| x / phase).collect();
    let tol = 1e-9;
    if v.iter().any(|x| x.im.abs() > tol || x.re < -tol) {
        return None;
    }
    let total: f64 = v.iter().map(|x| x.re.max(0.0)).sum();
    let masses: Vec<f64> = v[1..].iter().map(|x| x.re.max(0.0) / total).collect();
    MixedDensity::from_cell_masses(*kernel.grid(), v[0].re.max(0.0) / total, &masses, 0.0).ok()
}

/// `(T y^m)(z_j) / z_j^m` for every cell `j`, with `y^m` sampled at the cell centers.
pub fn eigenfunction_ratios(kernel: &ConditionalKernel, m: f64) -> Result<Vec<f64>> {
    let centers: Vec<f64> = kernel.grid().centers().collect();
    let f: Vec<f64> = centers.iter().map(|c| c.powf(m)).collect();
    let out = apply_function(kernel, &f)?;
    Ok(out.iter().zip(&f).map(|(o, v)| o / v).collect())
}

/// Largest relative deviation of the ratios from `lambda` on the middle half of the grid.
pub fn interior_ratio_deviation(kernel: &ConditionalKernel, m: f64, lambda: f64) -> Result<f64> {
    let ratios = eigenfunction_ratios(kernel, m)?;
    let n = ratios.len();
    Ok(ratios[n / 4..3 * n / 4]
        .iter()
        .map(|r| (r / lambda - 1.0).abs())
        .fold(0.0, f64::max))
}
