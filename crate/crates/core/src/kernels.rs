//! Transition kernels `k(y, ·)`: the law of the squared norm of a layer given
//! the squared norm `y` of its input.
//!
//! Two routes are provided. For ReLU the kernel is a binomial mixture of an
//! atom at zero and scaled chi-squared laws, integrated exactly over each cell
//! through chi-squared tail probabilities. For any other nondecreasing
//! activation the single-component law of `φ(h)²` is resolved on the grid and
//! raised to the `width`-th convolution power with FFTs.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;

use crate::activation::Activation;
use crate::distributions::{Grid, MixedDensity, PointMass};
use crate::error::{domain, Error, Result};
use crate::fft::convolve_truncated;
use crate::special::{chi2_upper_tail_ladder, log_binomial};

/// Binomial terms whose log-weight falls this far below the largest term are dropped.
pub const BINOMIAL_CUTOFF_NATS: f64 = 40.0;

/// Tolerance on row normalization.
pub const ROW_MASS_TOLERANCE: f64 = 1e-6;

/// Draw count of the sampling fallback for activations without an inverse.
pub const SAMPLING_FALLBACK_DRAWS: usize = 1_000_000;

/// One fully-connected layer of the random ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub width: usize,
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, sigma_w: f64, sigma_b: f64, activation: Activation) -> Result<Self> {
        let layer = Self {
            width,
            sigma_w,
            sigma_b,
            activation,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn relu(width: usize, sigma_w: f64, sigma_b: f64) -> Result<Self> {
        Self::new(width, sigma_w, sigma_b, Activation::Relu)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(domain("layer width must be positive"));
        }
        if !(self.sigma_w > 0.0) || !self.sigma_w.is_finite() {
            return Err(domain("sigma_w must be finite and positive"));
        }
        if !(self.sigma_b >= 0.0) || !self.sigma_b.is_finite() {
            return Err(domain("sigma_b must be finite and nonnegative"));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(slope > 0.0) {
                return Err(domain("leaky ReLU slope must be positive"));
            }
        }
        Ok(())
    }

    /// Pre-activation variance `σ_w² y + σ_b²`.
    pub fn pre_activation_variance(&self, y: f64) -> f64 {
        self.sigma_w * self.sigma_w * y + self.sigma_b * self.sigma_b
    }
}

/// `sqrt(σ_w² y + σ_b²)`.
pub fn pre_activation_std(layer: &LayerSpec, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(domain("squared norm must be nonnegative"));
    }
    Ok(layer.pre_activation_variance(y).sqrt())
}

/// Discretized kernel: one row per source value `y ∈ {0} ∪ cell centers`.
#[derive(Debug, Clone)]
pub struct ConditionalKernel {
    layer: LayerSpec,
    grid: Grid,
    atoms: Vec<f64>,
    leaked: Vec<f64>,
    // (n_points + 1) rows of n_points densities, row-major
    density: Vec<f64>,
}

impl ConditionalKernel {
    pub fn layer(&self) -> &LayerSpec {
        &self.layer
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of rows, `n_points + 1`.
    pub fn n_rows(&self) -> usize {
        self.atoms.len()
    }

    /// Source value of row `i`: `0` for `i = 0`, else the center of cell `i - 1`.
    pub fn source(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.grid.center(i - 1)
        }
    }

    pub fn row_atom(&self, i: usize) -> f64 {
        self.atoms[i]
    }

    pub fn row_leaked(&self, i: usize) -> f64 {
        self.leaked[i]
    }

    pub fn row_density(&self, i: usize) -> &[f64] {
        let n = self.grid.n_points();
        &self.density[i * n..(i + 1) * n]
    }

    pub fn row(&self, i: usize) -> MixedDensity {
        MixedDensity::new_unchecked(self.grid, self.atoms[i], self.row_density(i).to_vec(), self.leaked[i])
    }
}

/// Log-weights of the binomial mixture `C(N, k) 0.5^N`, truncated.
struct BinomialWeights {
    k_lo: usize,
    weights: Vec<f64>,
}

impl BinomialWeights {
    fn new(width: usize) -> Self {
        let n = width as u64;
        let ln_half_n = width as f64 * 0.5f64.ln();
        let logs: Vec<f64> = (1..=n)
            .map(|k| log_binomial(n, k).unwrap_or(f64::NEG_INFINITY) + ln_half_n)
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let keep = |l: f64| l >= max - BINOMIAL_CUTOFF_NATS;
        let k_lo = logs.iter().position(|&l| keep(l)).unwrap_or(0) + 1;
        let k_hi = logs.iter().rposition(|&l| keep(l)).unwrap_or(0) + 1;
        let weights = (k_lo..=k_hi).map(|k| logs[k - 1].exp()).collect();
        Self { k_lo, weights }
    }

    fn k_hi(&self) -> usize {
        self.k_lo + self.weights.len() - 1
    }

    /// `Σ_k w_k P(χ²_k > 2x)`.
    fn weighted_tail(&self, x: f64, ladder: &mut [f64]) -> f64 {
        chi2_upper_tail_ladder(x, ladder);
        self.weights
            .iter()
            .zip(&ladder[self.k_lo - 1..])
            .map(|(w, q)| w * q)
            .sum()
    }
}

/// Cell masses of the continuous ReLU part for pre-activation variance
/// `var > 0`; returns the mass beyond `z_max`.
fn relu_cell_masses(weights: &BinomialWeights, var: f64, grid: &Grid, masses: &mut [f64]) -> f64 {
    let mut ladder = vec![0.0; weights.k_hi()];
    let scale = 0.5 / var;
    let mut prev = weights.weighted_tail(0.0, &mut ladder);
    let n = grid.n_points();
    for j in 0..n {
        if prev < 1e-300 {
            masses[j..].iter_mut().for_each(|m| *m = 0.0);
            return prev.max(0.0);
        }
        let next = weights.weighted_tail(grid.edge(j + 1) * scale, &mut ladder);
        masses[j] = (prev - next).max(0.0);
        prev = next;
    }
    prev
}

/// Closed-form ReLU kernel row: atom `0.5^N` at zero plus the binomial
/// mixture of chi-squared laws scaled by `σ_y²`.
pub fn relu_kernel_row(layer: &LayerSpec, y: f64, grid: &Grid) -> Result<MixedDensity> {
    if !layer.activation.is_relu() {
        return Err(Error::WrongKernel(layer.activation.name()));
    }
    let var = pre_activation_std(layer, y)?.powi(2);
    if var == 0.0 {
        return Ok(MixedDensity::atom_at_zero(*grid));
    }
    let weights = BinomialWeights::new(layer.width);
    Ok(relu_row_with(&weights, layer.width, var, grid))
}

fn relu_row_with(weights: &BinomialWeights, width: usize, var: f64, grid: &Grid) -> MixedDensity {
    let mut masses = vec![0.0; grid.n_points()];
    let leaked = relu_cell_masses(weights, var, grid, &mut masses);
    let atom = 0.5f64.powi(width as i32);
    let inv = 1.0 / grid.step();
    masses.iter_mut().for_each(|m| *m *= inv);
    MixedDensity::new_unchecked(*grid, atom, masses, leaked)
}

/// Single-component law of `φ(h)²`: atom at zero, cell masses, the
/// conditional mean of each cell as a fraction of the cell, tail beyond `z_max`.
struct ComponentLaw {
    atom: f64,
    masses: Vec<f64>,
    offsets: Vec<f64>,
    tail: f64,
}

fn component_law_analytic(act: &Activation, sigma: f64, q: f64, grid: &Grid) -> Option<ComponentLaw> {
    let n = grid.n_points();
    let step = grid.step();
    let cdf = |z: f64| act.square_law_cdf(z, sigma);
    let mut masses = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut prev = q;
    for j in 0..n {
        let (a, b) = (grid.edge(j), grid.edge(j + 1));
        let next = cdf(b)?.max(prev);
        let m = next - prev;
        // ∫_a^b (F − F(a)) dz by Simpson in u = √z, which absorbs the √z
        // behaviour of F at the origin
        let (ua, ub) = (a.sqrt(), b.sqrt());
        let um = 0.5 * (ua + ub);
        let fm = (cdf(um * um)?.clamp(prev, next) - prev) * 2.0 * um;
        let integral = (ub - ua) / 6.0 * (4.0 * fm + m * 2.0 * ub);
        let t = if m > 1e-300 { (1.0 - integral / (m * step)).clamp(0.0, 1.0) } else { 0.5 };
        masses.push(m);
        offsets.push(t);
        prev = next;
    }
    Some(ComponentLaw {
        atom: q,
        masses,
        offsets,
        tail: (1.0 - prev).max(0.0),
    })
}

fn component_law_sampled(act: &Activation, sigma: f64, grid: &Grid) -> ComponentLaw {
    let seed = sigma.to_bits() ^ 0x9e37_79b9_7f4a_7c15;
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let n = grid.n_points();
    let mut counts = vec![0usize; n];
    let mut sums = vec![0.0; n];
    let (mut zeros, mut beyond) = (0usize, 0usize);
    for _ in 0..SAMPLING_FALLBACK_DRAWS {
        let h: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let v = act.forward(h);
        let s = v * v;
        if s == 0.0 {
            zeros += 1;
        } else {
            match grid.cell_of(s) {
                Some(i) => {
                    counts[i] += 1;
                    sums[i] += s / grid.step() - i as f64;
                }
                None => beyond += 1,
            }
        }
    }
    let total = SAMPLING_FALLBACK_DRAWS as f64;
    ComponentLaw {
        atom: zeros as f64 / total,
        masses: counts.iter().map(|&c| c as f64 / total).collect(),
        offsets: counts
            .iter()
            .zip(&sums)
            .map(|(&c, &t)| if c > 0 { (t / c as f64).clamp(0.0, 1.0) } else { 0.5 })
            .collect(),
        tail: beyond as f64 / total,
    }
}

/// Lattice points per cell in [`generic_kernel_row`].
const LATTICE_PER_CELL: usize = 4;

/// Kernel row for any nondecreasing activation via the `width`-fold
/// convolution power of the single-component law.
///
/// The component law lives on a lattice of quarter cells: position 0 is the
/// atom, and the mass of cell `i` is split between two of its interior points
/// `4i + 1..=4i + 3` so that its conditional mean is kept. Cell masses are
/// then exact for a single component and means add exactly under
/// convolution. Sums of lattice points stay on the lattice; points on a cell
/// edge are split evenly between the two neighbouring cells. Convolution
/// powers are taken by binary exponentiation with zero-padded FFTs,
/// truncating at `z_max` after every product; mass beyond the grid can never
/// return, so the truncation is exact on the grid.
pub fn generic_kernel_row(layer: &LayerSpec, y: f64, grid: &Grid) -> Result<MixedDensity> {
    layer.validate()?;
    let sigma = pre_activation_std(layer, y)?;
    let act = layer.activation;
    if sigma == 0.0 {
        let v = act.forward(0.0);
        let total = layer.width as f64 * v * v;
        if total > grid.z_max() {
            return Ok(MixedDensity::new_unchecked(*grid, 0.0, vec![0.0; grid.n_points()], 1.0));
        }
        return PointMass::new(total)?.discretize(grid);
    }
    let law = match act.zero_mass_probability(sigma) {
        Some(q) => match component_law_analytic(&act, sigma, q, grid) {
            Some(law) => law,
            None => component_law_sampled(&act, sigma, grid),
        },
        None => component_law_sampled(&act, sigma, grid),
    };
    let deviation = (law.atom + law.masses.iter().sum::<f64>() + law.tail - 1.0).abs();
    if deviation > 1e-3 {
        return Err(Error::Resolution { deviation });
    }

    let n = grid.n_points();
    let r = LATTICE_PER_CELL;
    let len = r * n + 1;
    let mut base = vec![0.0; len];
    base[0] = law.atom;
    for (i, (m, t)) in law.masses.iter().zip(&law.offsets).enumerate() {
        let x = (r as f64 * t).clamp(1.0, (r - 1) as f64);
        let lo = x.floor();
        let w = x - lo;
        let p = r * i + lo as usize;
        base[p] += m * (1.0 - w);
        if w > 0.0 {
            base[p + 1] += m * w;
        }
    }
    let mut acc: Option<Vec<f64>> = None;
    let mut power = layer.width;
    loop {
        if power & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => convolve_truncated(&a, &base, len),
            });
        }
        power >>= 1;
        if power == 0 {
            break;
        }
        base = convolve_truncated(&base, &base, len);
    }
    let lattice = acc.expect("width is positive");

    let mut masses = vec![0.0; n];
    for (p, &m) in lattice.iter().enumerate().skip(1) {
        if p % r != 0 {
            masses[p / r] += m;
        } else {
            let right = p / r;
            masses[right - 1] += 0.5 * m;
            if right < n {
                masses[right] += 0.5 * m;
            }
        }
    }
    let atom = lattice[0];
    let on_grid: f64 = masses.iter().sum();
    let leaked = (1.0 - atom - on_grid).max(0.0);
    let inv = 1.0 / grid.step();
    Ok(MixedDensity::new_unchecked(
        *grid,
        atom,
        masses.into_iter().map(|m| m * inv).collect(),
        leaked,
    ))
}

/// Builds every row of the discretized kernel. ReLU layers use the closed
/// form, everything else the convolution route.
pub fn kernel_matrix(layer: &LayerSpec, grid: &Grid) -> Result<ConditionalKernel> {
    layer.validate()?;
    let n = grid.n_points();
    let sources: Vec<f64> = core::iter::once(0.0).chain(grid.centers()).collect();
    let weights = layer.activation.is_relu().then(|| BinomialWeights::new(layer.width));
    let build = |y: &f64| -> Result<MixedDensity> {
        match &weights {
            Some(w) => {
                let var = layer.pre_activation_variance(*y);
                if var == 0.0 {
                    Ok(MixedDensity::atom_at_zero(*grid))
                } else {
                    Ok(relu_row_with(w, layer.width, var, grid))
                }
            }
            None => generic_kernel_row(layer, *y, grid),
        }
    };
    #[cfg(feature = "std")]
    let rows: Vec<Result<MixedDensity>> = {
        use rayon::prelude::*;
        sources.par_iter().map(build).collect()
    };
    #[cfg(not(feature = "std"))]
    let rows: Vec<Result<MixedDensity>> = sources.iter().map(build).collect();

    let mut atoms = Vec::with_capacity(n + 1);
    let mut leaked = Vec::with_capacity(n + 1);
    let mut density = Vec::with_capacity((n + 1) * n);
    for row in rows {
        let row = row?;
        atoms.push(row.atom0());
        leaked.push(row.leaked_mass());
        density.extend_from_slice(row.density());
    }
    Ok(ConditionalKernel {
        layer: *layer,
        grid: *grid,
        atoms,
        leaked,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu(width: usize, sw: f64, sb: f64) -> LayerSpec {
        LayerSpec::relu(width, sw, sb).unwrap()
    }

    #[test]
    fn pre_activation_std_examples() {
        assert!((pre_activation_std(&relu(200, 0.1, 0.0), 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(pre_activation_std(&relu(3, 0.7, 0.0), 0.0).unwrap(), 0.0);
        assert!((pre_activation_std(&relu(3, 1.0, 1.0), 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(pre_activation_std(&relu(3, 1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn layer_validation() {
        assert!(LayerSpec::relu(0, 1.0, 0.0).is_err());
        assert!(LayerSpec::relu(3, 0.0, 0.0).is_err());
        assert!(LayerSpec::relu(3, 1.0, -0.1).is_err());
        assert!(LayerSpec::new(3, 1.0, 0.0, Activation::LeakyRelu { slope: 0.0 }).is_err());
    }

    #[test]
    fn relu_row_atom_and_mass() {
        let g = Grid::new(20.0, 2048).unwrap();
        let row = relu_kernel_row(&relu(3, 1.0, 0.0), 2.0, &g).unwrap();
        assert!((row.atom0() - 0.125).abs() < 1e-12);
        assert!((row.total_mass() - 1.0).abs() < 1e-12);
        let dead = relu_kernel_row(&relu(3, 1.0, 0.0), 0.0, &g).unwrap();
        assert_eq!(dead.atom0(), 1.0);
        let biased = relu_kernel_row(&relu(5, 1.0, 0.3), 0.0, &g).unwrap();
        assert!((biased.atom0() - 0.5f64.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn relu_row_rejects_other_activations() {
        let g = Grid::new(2.0, 16).unwrap();
        let layer = LayerSpec::new(3, 1.0, 0.0, Activation::Tanh).unwrap();
        assert!(matches!(relu_kernel_row(&layer, 1.0, &g), Err(Error::WrongKernel("tanh"))));
    }

    #[test]
    fn relu_row_mean_wide_layer() {
        // (σ_w² y + σ_b²) N / 2 = 0.01 · 1 · 100 = 1
        let g = Grid::new(8.0, 4096).unwrap();
        let row = relu_kernel_row(&relu(200, 0.1, 0.0), 1.0, &g).unwrap();
        assert!(row.leaked_mass() < 1e-12);
        assert!((row.mean() - 1.0).abs() < 1e-3, "mean {}", row.mean());
    }

    #[test]
    fn relu_row_matches_direct_cdf_oracle() {
        // oracle: mixture CDF from the series/continued-fraction incomplete gamma
        let layer = relu(4, 0.8, 0.2);
        let g = Grid::new(12.0, 300).unwrap();
        let y = 1.7;
        let var = layer.pre_activation_variance(y);
        let row = relu_kernel_row(&layer, y, &g).unwrap();
        let cdf = |z: f64| {
            let mut acc = 0.5f64.powi(4);
            for k in 1..=4u32 {
                let w = (log_binomial(4, k as u64).unwrap()).exp() * 0.5f64.powi(4);
                acc += w * crate::special::chi2_cdf(k, z / var).unwrap();
            }
            acc
        };
        let edges = row.cdf_at_edges();
        for (j, e) in edges.iter().enumerate() {
            assert!((e - cdf(g.edge(j))).abs() < 1e-13, "edge {j}");
        }
        assert!((row.leaked_mass() - (1.0 - cdf(12.0))).abs() < 1e-13);
    }

    #[test]
    fn generic_identity_is_scaled_chi2_one() {
        let layer = LayerSpec::new(1, 0.6, 0.0, Activation::Identity).unwrap();
        let g = Grid::new(6.0, 1024).unwrap();
        let row = generic_kernel_row(&layer, 1.0, &g).unwrap();
        let var = 0.36;
        let edges = row.cdf_at_edges();
        for (j, e) in edges.iter().enumerate().skip(1) {
            let expect = crate::special::chi2_cdf(1, g.edge(j) / var).unwrap();
            assert!((e - expect).abs() < 1e-12);
        }
        assert!((row.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn generic_identity_is_chi_squared() {
        // rounding to cell centres used to bias the mean by ~N Δ / 6 here
        for (n, z_max, tol) in [(8usize, 72.0, 1e-3), (32, 168.0, 1e-4)] {
            let layer = LayerSpec::new(n, 1.0, 0.0, Activation::Identity).unwrap();
            let g = Grid::new(z_max, 4096).unwrap();
            let row = generic_kernel_row(&layer, 1.0, &g).unwrap();
            let l1: f64 = (0..4096)
                .map(|i| {
                    let exact = crate::special::chi2_cdf(n as u32, g.edge(i + 1)).unwrap()
                        - crate::special::chi2_cdf(n as u32, g.edge(i)).unwrap();
                    (exact - row.density()[i] * g.step()).abs()
                })
                .sum();
            assert!(l1 < tol, "N={n}: {l1}");
            assert!((row.mean() - n as f64).abs() < 1e-3 * n as f64);
        }
    }

    #[test]
    fn generic_matches_relu_closed_form() {
        let layer = relu(8, 0.5, 0.0);
        let g = Grid::new(12.0, 4096).unwrap();
        let a = generic_kernel_row(&layer, 1.0, &g).unwrap();
        let b = relu_kernel_row(&layer, 1.0, &g).unwrap();
        let l1 = a.l1_distance(&b).unwrap();
        assert!(l1 < 1e-3, "l1 {l1}");
        assert!((a.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn generic_rows_normalized_for_several_activations() {
        let g = Grid::new(30.0, 512).unwrap();
        for act in [
            Activation::Tanh,
            Activation::HardTanh,
            Activation::LeakyRelu { slope: 0.2 },
            Activation::Custom {
                name: "softplus",
                forward: |x: f64| (1.0 + x.exp()).ln(),
            },
        ] {
            let layer = LayerSpec::new(6, 1.1, 0.1, act).unwrap();
            let row = generic_kernel_row(&layer, 2.0, &g).unwrap();
            assert!((row.total_mass() - 1.0).abs() < 1e-6, "{}", act.name());
        }
    }

    #[test]
    fn kernel_matrix_rows() {
        let g = Grid::new(10.0, 64).unwrap();
        let k = kernel_matrix(&relu(5, 0.9, 0.0), &g).unwrap();
        assert_eq!(k.n_rows(), 65);
        assert_eq!(k.row_atom(0), 1.0);
        for i in 0..k.n_rows() {
            assert!((k.row(i).total_mass() - 1.0).abs() < ROW_MASS_TOLERANCE);
        }
        let kb = kernel_matrix(&relu(5, 0.9, 0.4), &g).unwrap();
        for i in 0..kb.n_rows() {
            assert!((kb.row_atom(i) - 0.5f64.powi(5)).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_row_means_are_affine() {
        let layer = relu(10, 0.4, 0.3);
        let g = Grid::new(60.0, 1024).unwrap();
        let k = kernel_matrix(&layer, &g).unwrap();
        for i in (0..100).step_by(7) {
            let y = k.source(i);
            let expect = layer.pre_activation_variance(y) * 5.0;
            assert!(k.row_leaked(i) < 1e-9);
            assert!((k.row(i).mean() - expect).abs() < 1e-3 * expect.max(1.0), "row {i}");
        }
    }

    #[test]
    fn scaling_covariance_without_bias() {
        // row(c y) on grid (c z_max) equals row(y) on grid z_max, cell by cell in mass
        let layer = relu(6, 0.7, 0.0);
        let c = 3.0;
        let g1 = Grid::new(10.0, 500).unwrap();
        let g2 = Grid::new(30.0, 500).unwrap();
        let a = relu_kernel_row(&layer, 2.0, &g1).unwrap();
        let b = relu_kernel_row(&layer, 2.0 * c, &g2).unwrap();
        for (ma, mb) in a.cell_masses().iter().zip(b.cell_masses()) {
            assert!((ma - mb).abs() < 1e-13);
        }
        assert!((a.leaked_mass() - b.leaked_mass()).abs() < 1e-13);
    }
}
