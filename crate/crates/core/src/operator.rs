//! Application of the discretized transition operator and multi-layer
//! propagation of squared-norm laws.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::distributions::MixedDensity;
use crate::error::{domain, Result};
use crate::kernels::{kernel_matrix, ConditionalKernel, LayerSpec};
use crate::special::std_normal_cdf;

/// Input width and the ordered hidden layers `l = 1..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let net = Self { input_width, layers };
        net.validate()?;
        Ok(net)
    }

    /// `depth` copies of one layer.
    pub fn uniform(input_width: usize, layer: LayerSpec, depth: usize) -> Result<Self> {
        Self::new(input_width, vec![layer; depth])
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 {
            return Err(domain("input width must be positive"));
        }
        if self.layers.is_empty() {
            return Err(domain("network needs at least one layer"));
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Moments and bookkeeping of one propagated law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSummary {
    pub mean: f64,
    pub variance: f64,
    pub atom0: f64,
    pub leaked_mass: f64,
}

impl LayerSummary {
    pub fn of(p: &MixedDensity) -> Self {
        Self {
            mean: p.mean(),
            variance: p.variance(),
            atom0: p.atom0(),
            leaked_mass: p.leaked_mass(),
        }
    }
}

/// Laws `p_0..p_L` with their summaries.
#[derive(Debug, Clone)]
pub struct PropagationTrace {
    pub densities: Vec<MixedDensity>,
    pub summaries: Vec<LayerSummary>,
    /// Number of distinct kernels that had to be built.
    pub kernels_built: usize,
}

impl PropagationTrace {
    pub fn last(&self) -> &MixedDensity {
        self.densities.last().expect("trace holds the input law")
    }
}

/// `T p`: `atom0(p)·row(0) + Δ Σ_i p_i row(z_i)`. Leaked input mass stays leaked.
pub fn apply(kernel: &ConditionalKernel, p: &MixedDensity) -> Result<MixedDensity> {
    kernel.grid().check_same(p.grid())?;
    let grid = *kernel.grid();
    let step = grid.step();
    let n = grid.n_points();
    let mut density = vec![0.0; n];
    let mut atom = 0.0;
    let mut leaked = p.leaked_mass();
    let weights = core::iter::once(p.atom0()).chain(p.density().iter().map(|d| d * step));
    for (i, w) in weights.enumerate() {
        if w == 0.0 {
            continue;
        }
        atom += w * kernel.row_atom(i);
        leaked += w * kernel.row_leaked(i);
        density
            .iter_mut()
            .zip(kernel.row_density(i))
            .for_each(|(o, r)| *o += w * r);
    }
    Ok(MixedDensity::new_unchecked(grid, atom, density, leaked))
}

/// Applies the kernel to an unnormalized function sampled at the cell centers:
/// returns `Δ Σ_i f(z_i) k(z_i, z_j)` for every cell `j`. The `y = 0` row is
/// excluded so that singular power functions can be used.
pub fn apply_function(kernel: &ConditionalKernel, f: &[f64]) -> Result<Vec<f64>> {
    let n = kernel.grid().n_points();
    if f.len() != n {
        return Err(domain("function must have one value per cell"));
    }
    let step = kernel.grid().step();
    let mut out = vec![0.0; n];
    for (i, v) in f.iter().enumerate() {
        let w = v * step;
        out.iter_mut()
            .zip(kernel.row_density(i + 1))
            .for_each(|(o, r)| *o += w * r);
    }
    Ok(out)
}

/// Propagates `p0` through every layer, building each distinct kernel once.
pub fn propagate(net: &NetworkSpec, p0: &MixedDensity) -> Result<PropagationTrace> {
    net.validate()?;
    let mut cache: Vec<ConditionalKernel> = Vec::new();
    let mut densities = vec![p0.clone()];
    for layer in &net.layers {
        let idx = match cache.iter().position(|k| k.layer() == layer) {
            Some(i) => i,
            None => {
                cache.push(kernel_matrix(layer, p0.grid())?);
                cache.len() - 1
            }
        };
        let next = apply(&cache[idx], densities.last().expect("nonempty"))?;
        densities.push(next);
    }
    let summaries = densities.iter().map(LayerSummary::of).collect();
    Ok(PropagationTrace {
        densities,
        summaries,
        kernels_built: cache.len(),
    })
}

/// `P(x_i <= x)` for one component of the next layer, given the law of the
/// previous squared norm. Mass beyond the grid is evaluated at `z_max`.
pub fn component_cdf(p_prev: &MixedDensity, layer: &LayerSpec, x: f64) -> f64 {
    let act = layer.activation;
    let Some(t) = act.generalized_inverse(x) else {
        return f64::NAN;
    };
    let at = |y: f64| -> f64 {
        let sigma = layer.pre_activation_variance(y).sqrt();
        if sigma == 0.0 {
            return if x >= act.forward(0.0) { 1.0 } else { 0.0 };
        }
        std_normal_cdf(t / sigma)
    };
    let grid = p_prev.grid();
    let step = grid.step();
    let mut acc = p_prev.atom0() * at(0.0);
    for (i, d) in p_prev.density().iter().enumerate() {
        if *d != 0.0 {
            acc += d * step * at(grid.center(i));
        }
    }
    acc += p_prev.leaked_mass() * at(grid.z_max());
    acc.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::distributions::{Grid, PointMass};
    use proptest::prelude::*;

    fn relu(width: usize, sw: f64, sb: f64) -> LayerSpec {
        LayerSpec::relu(width, sw, sb).unwrap()
    }

    #[test]
    fn dead_network_is_fixed_point() {
        let g = Grid::new(10.0, 128).unwrap();
        let k = kernel_matrix(&relu(4, 1.0, 0.0), &g).unwrap();
        let out = apply(&k, &MixedDensity::atom_at_zero(g)).unwrap();
        assert_eq!(out.atom0(), 1.0);
        assert_eq!(out.cell_mass(), 0.0);
    }

    #[test]
    fn point_mass_input_reproduces_row() {
        let g = Grid::new(10.0, 256).unwrap();
        let k = kernel_matrix(&relu(4, 0.8, 0.1), &g).unwrap();
        let p = PointMass::new(g.center(40)).unwrap().discretize(&g).unwrap();
        let out = apply(&k, &p).unwrap();
        assert!(out.l1_distance(&k.row(41)).unwrap() < 1e-12);
    }

    #[test]
    fn mean_follows_conditional_expectation() {
        let g = Grid::new(40.0, 2048).unwrap();
        let layer = relu(12, 0.35, 0.2);
        let k = kernel_matrix(&layer, &g).unwrap();
        let p = MixedDensity::uniform(g, 1.0, 5.0).unwrap();
        let out = apply(&k, &p).unwrap();
        let expect = (0.35f64.powi(2) * p.mean() + 0.04) * 6.0;
        assert!((out.mean() - expect).abs() < 1e-3, "{} vs {expect}", out.mean());
    }

    #[test]
    fn atom_recursion() {
        let g = Grid::new(5.0, 200).unwrap();
        let base = MixedDensity::uniform(g, 0.5, 4.0).unwrap();
        let p = base.mix(&MixedDensity::atom_at_zero(g), 0.7).unwrap();
        let p = MixedDensity::new_unchecked(g, p.atom0(), p.density().to_vec(), 0.0);
        for (sb, n) in [(0.0, 3), (0.4, 5)] {
            let k = kernel_matrix(&relu(n, 1.2, sb), &g).unwrap();
            let out = apply(&k, &p).unwrap();
            let h = 0.5f64.powi(n as i32);
            let expect = if sb == 0.0 {
                h * (1.0 - p.atom0() - p.leaked_mass()) + p.atom0()
            } else {
                h * (1.0 - p.leaked_mass())
            };
            assert!((out.atom0() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn leaked_mass_carries_through() {
        let g = Grid::new(5.0, 100).unwrap();
        let p = MixedDensity::new(g, 0.2, vec![0.6 / 5.0; 100], 0.2).unwrap();
        let k = kernel_matrix(&relu(3, 0.5, 0.0), &g).unwrap();
        let out = apply(&k, &p).unwrap();
        assert!(out.leaked_mass() >= 0.2);
        assert!((out.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let k = kernel_matrix(&relu(3, 0.5, 0.0), &Grid::new(5.0, 50).unwrap()).unwrap();
        let p = MixedDensity::atom_at_zero(Grid::new(5.0, 60).unwrap());
        assert!(apply(&k, &p).is_err());
    }

    #[test]
    fn propagate_reuses_kernels() {
        let g = Grid::new(8.0, 256).unwrap();
        let a = relu(20, 0.3, 0.0);
        let b = relu(30, 0.25, 0.0);
        let net = NetworkSpec::new(10, vec![a, b, a, b, a]).unwrap();
        let p0 = PointMass::new(1.0).unwrap().discretize(&g).unwrap();
        let trace = propagate(&net, &p0).unwrap();
        assert_eq!(trace.kernels_built, 2);
        assert_eq!(trace.densities.len(), 6);
        let k = kernel_matrix(&a, &g).unwrap();
        let single = apply(&k, &p0).unwrap();
        assert!(single.l1_distance(&trace.densities[1]).unwrap() < 1e-15);
    }

    #[test]
    fn propagate_requires_layers() {
        assert!(NetworkSpec::new(3, vec![]).is_err());
        assert!(NetworkSpec::new(0, vec![relu(2, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn component_cdf_examples() {
        let g = Grid::new(10.0, 500).unwrap();
        let layer = relu(5, 0.9, 0.0);
        let p = MixedDensity::uniform(g, 1.0, 3.0).unwrap();
        assert!((component_cdf(&p, &layer, 0.0) - 0.5).abs() < 1e-12);
        assert!((component_cdf(&p, &layer, 1e6) - 1.0).abs() < 1e-12);
        let y = g.center(100);
        let pm = PointMass::new(y).unwrap().discretize(&g).unwrap();
        let sigma = 0.9 * y.sqrt();
        assert!((component_cdf(&pm, &layer, 0.7) - std_normal_cdf(0.7 / sigma)).abs() < 1e-14);
        // dead input without bias: every component is exactly zero
        let dead = MixedDensity::atom_at_zero(g);
        assert_eq!(component_cdf(&dead, &layer, 0.0), 1.0);
        assert_eq!(component_cdf(&dead, &layer, -0.1), 0.0);
        let tanh = LayerSpec::new(5, 0.9, 0.0, Activation::Tanh).unwrap();
        assert_eq!(component_cdf(&p, &tanh, 1.0), 1.0);
    }

    fn arb_density(g: Grid) -> impl Strategy<Value = MixedDensity> {
        (0.0..1.0f64, proptest::collection::vec(0.0..1.0f64, g.n_points())).prop_map(move |(a, w)| {
            let s: f64 = w.iter().sum::<f64>() + 1e-12;
            let masses: Vec<f64> = w.iter().map(|x| x / s * (1.0 - a)).collect();
            MixedDensity::from_cell_masses(g, a, &masses, 1.0 - a - masses.iter().sum::<f64>()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn apply_is_linear(p in arb_density(Grid::new(6.0, 48).unwrap()),
                           q in arb_density(Grid::new(6.0, 48).unwrap())) {
            let g = *p.grid();
            let k = kernel_matrix(&relu(4, 0.9, 0.2), &g).unwrap();
            for alpha in [0.0, 0.3, 1.0] {
                let mixed = apply(&k, &p.mix(&q, alpha).unwrap()).unwrap();
                let sep = apply(&k, &p).unwrap().mix(&apply(&k, &q).unwrap(), alpha).unwrap();
                prop_assert!((mixed.atom0() - sep.atom0()).abs() < 1e-12);
                prop_assert!((mixed.leaked_mass() - sep.leaked_mass()).abs() < 1e-12);
                for (a, b) in mixed.density().iter().zip(sep.density()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn apply_conserves_mass(p in arb_density(Grid::new(6.0, 48).unwrap()), sb in 0.0..1.0f64) {
            let g = *p.grid();
            let k = kernel_matrix(&relu(3, 1.1, sb), &g).unwrap();
            let out = apply(&k, &p).unwrap();
            prop_assert!((out.total_mass() - p.total_mass()).abs() < 1e-6);
            prop_assert!(out.leaked_mass() >= p.leaked_mass() - 1e-15);
        }

        #[test]
        fn component_cdf_monotone(p in arb_density(Grid::new(6.0, 48).unwrap()), sb in 0.0..0.5f64) {
            let layer = relu(3, 1.0, sb);
            let mut prev = 0.0;
            for i in -20..=60 {
                let v = component_cdf(&p, &layer, 0.1 * i as f64);
                prop_assert!(v + 1e-15 >= prev);
                prev = v;
            }
            prop_assert!(component_cdf(&p, &layer, -1e9) < 1e-12);
            prop_assert!((component_cdf(&p, &layer, 1e9) - 1.0).abs() < 1e-12);
        }
    }
}
