//! Probability measures on `[0, ∞)` with an explicit atom at zero and a
//! piecewise-constant density on an equidistant grid.
//!
//! Cells are right-closed: cell `i` covers `(iΔ, (i+1)Δ]`, so the open
//! half-line `(0, z_max]` is partitioned exactly and `z = 0` belongs only to
//! the atom.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{domain, Error, Result};

/// Tolerance for the total-mass invariant of [`MixedDensity`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Equidistant grid over `(0, z_max]` with `n_points` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    z_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(z_max: f64, n_points: usize) -> Result<Self> {
        if !(z_max > 0.0) || !z_max.is_finite() {
            return Err(domain("grid z_max must be finite and positive"));
        }
        if n_points < 2 {
            return Err(domain("grid needs at least two cells"));
        }
        Ok(Self { z_max, n_points })
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Cell width Δ.
    pub fn step(&self) -> f64 {
        self.z_max / self.n_points as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.step()
    }

    /// Left edge of cell `j`; `edge(n_points)` is `z_max`.
    pub fn edge(&self, j: usize) -> f64 {
        if j == self.n_points {
            self.z_max
        } else {
            j as f64 * self.step()
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.center(i))
    }

    /// Index of the cell containing `z`, or `None` for `z = 0` (the atom) and
    /// for `z > z_max`.
    pub fn cell_of(&self, z: f64) -> Option<usize> {
        if !(z > 0.0) || z > self.z_max {
            return None;
        }
        let idx = (z / self.step()).ceil() as usize;
        Some(idx.clamp(1, self.n_points) - 1)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        let same_n = self.n_points == other.n_points;
        let same_z = (self.z_max - other.z_max).abs() <= 1e-12 * self.z_max.max(other.z_max);
        if same_n && same_z {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                z_max_a: self.z_max,
                n_a: self.n_points,
                z_max_b: other.z_max,
                n_b: other.n_points,
            })
        }
    }
}

/// A probability law of a squared norm: atom at zero, cell densities, and the
/// mass that left the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDensity {
    grid: Grid,
    atom0: f64,
    density: Vec<f64>,
    leaked_mass: f64,
}

impl MixedDensity {
    /// Validating constructor; total mass must be one within [`MASS_TOLERANCE`].
    pub fn new(grid: Grid, atom0: f64, density: Vec<f64>, leaked_mass: f64) -> Result<Self> {
        let d = Self::new_unchecked(grid, atom0, density, leaked_mass);
        d.validate()?;
        Ok(d)
    }

    pub(crate) fn new_unchecked(grid: Grid, atom0: f64, density: Vec<f64>, leaked_mass: f64) -> Self {
        Self {
            grid,
            atom0,
            density,
            leaked_mass,
        }
    }

    /// Builds a density from cell masses instead of density values.
    pub fn from_cell_masses(grid: Grid, atom0: f64, masses: &[f64], leaked_mass: f64) -> Result<Self> {
        let inv = 1.0 / grid.step();
        Self::new(grid, atom0, masses.iter().map(|m| m * inv).collect(), leaked_mass)
    }

    /// All mass at `z = 0`.
    pub fn atom_at_zero(grid: Grid) -> Self {
        Self::new_unchecked(grid, 1.0, vec![0.0; grid.n_points], 0.0)
    }

    /// Uniform law on `[a, b] ⊂ [0, z_max]`, cell masses by exact overlap.
    pub fn uniform(grid: Grid, a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= grid.z_max) {
            return Err(domain("uniform support must satisfy 0 <= a < b <= z_max"));
        }
        let masses: Vec<f64> = (0..grid.n_points)
            .map(|i| {
                let lo = grid.edge(i).max(a);
                let hi = grid.edge(i + 1).min(b);
                ((hi - lo) / (b - a)).max(0.0)
            })
            .collect();
        Self::from_cell_masses(grid, 0.0, &masses, 0.0)
    }

    fn validate(&self) -> Result<()> {
        if self.density.len() != self.grid.n_points {
            return Err(domain("density length must equal the number of grid cells"));
        }
        if !(0.0..=1.0 + MASS_TOLERANCE).contains(&self.atom0) {
            return Err(domain("atom0 must lie in [0, 1]"));
        }
        if !(self.leaked_mass >= 0.0) {
            return Err(domain("leaked mass must be nonnegative"));
        }
        if self.density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(domain("density values must be finite and nonnegative"));
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(domain(alloc::format!("total mass {total} differs from 1")));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atom0(&self) -> f64 {
        self.atom0
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn leaked_mass(&self) -> f64 {
        self.leaked_mass
    }

    /// Mass held by the grid cells (atom and leakage excluded).
    pub fn cell_mass(&self) -> f64 {
        self.grid.step() * self.density.iter().sum::<f64>()
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        let step = self.grid.step();
        self.density.iter().map(|d| d * step).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atom0 + self.cell_mass() + self.leaked_mass
    }

    /// First moment by the midpoint rule; leaked mass contributes nothing.
    pub fn mean(&self) -> f64 {
        let step = self.grid.step();
        step * self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| self.grid.center(i) * d)
            .sum::<f64>()
    }

    /// Second moment by the midpoint rule.
    pub fn second_moment(&self) -> f64 {
        let step = self.grid.step();
        step * self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let z = self.grid.center(i);
                z * z * d
            })
            .sum::<f64>()
    }

    /// Variance of the on-grid part, `E[z²] - E[z]²`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// `P(Z <= z)` with the density integrated exactly over partial cells.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(domain("cdf requires z >= 0"));
        }
        let step = self.grid.step();
        if z >= self.grid.z_max {
            return Ok(self.atom0 + self.cell_mass());
        }
        let full = (z / step).floor() as usize;
        let mut acc = self.atom0;
        acc += step * self.density[..full].iter().sum::<f64>();
        acc += (z - self.grid.edge(full)) * self.density[full];
        Ok(acc.min(1.0))
    }

    /// CDF evaluated at every cell edge, `edge(0) = 0` through `z_max`.
    pub fn cdf_at_edges(&self) -> Vec<f64> {
        let step = self.grid.step();
        let mut out = Vec::with_capacity(self.grid.n_points + 1);
        let mut acc = self.atom0;
        out.push(acc);
        for d in &self.density {
            acc += step * d;
            out.push(acc);
        }
        out
    }

    /// Kolmogorov–Smirnov distance. The CDFs are piecewise linear between
    /// edges, so the supremum is attained on an edge.
    pub fn ks_distance(&self, other: &MixedDensity) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a = self.cdf_at_edges();
        let b = other.cdf_at_edges();
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }

    /// Total-variation style L1 distance over atom, cells and leakage.
    pub fn l1_distance(&self, other: &MixedDensity) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let step = self.grid.step();
        let cells: f64 = self.density.iter().zip(&other.density).map(|(a, b)| (a - b).abs()).sum();
        Ok((self.atom0 - other.atom0).abs() + step * cells + (self.leaked_mass - other.leaked_mass).abs())
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &MixedDensity, alpha: f64) -> Result<MixedDensity> {
        self.grid.check_same(&other.grid)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(domain("mixing weight must lie in [0, 1]"));
        }
        let beta = 1.0 - alpha;
        Ok(Self::new_unchecked(
            self.grid,
            alpha * self.atom0 + beta * other.atom0,
            self.density.iter().zip(&other.density).map(|(a, b)| alpha * a + beta * b).collect(),
            alpha * self.leaked_mass + beta * other.leaked_mass,
        ))
    }
}

/// Exact location of a known squared norm, prior to discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    location: f64,
}

impl PointMass {
    pub fn new(location: f64) -> Result<Self> {
        if !(location >= 0.0) || !location.is_finite() {
            return Err(domain("point mass location must be finite and nonnegative"));
        }
        Ok(Self { location })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    /// Puts all mass in the containing cell, or in the atom for location zero.
    pub fn discretize(&self, grid: &Grid) -> Result<MixedDensity> {
        if self.location > grid.z_max {
            return Err(Error::OutOfRange {
                value: self.location,
                z_max: grid.z_max,
            });
        }
        match grid.cell_of(self.location) {
            None => Ok(MixedDensity::atom_at_zero(*grid)),
            Some(i) => {
                let mut density = vec![0.0; grid.n_points];
                density[i] = 1.0 / grid.step();
                Ok(MixedDensity::new_unchecked(*grid, 0.0, density, 0.0))
            }
        }
    }
}

/// Histogram law of nonnegative samples: exact zeros go to the atom, samples
/// beyond `z_max` to the leaked mass.
pub fn empirical_density(samples: &[f64], grid: &Grid) -> Result<MixedDensity> {
    if samples.is_empty() {
        return Err(domain("empirical density needs at least one sample"));
    }
    let mut zeros = 0usize;
    let mut beyond = 0usize;
    let mut counts = vec![0usize; grid.n_points];
    for &s in samples {
        if !(s >= 0.0) {
            return Err(domain("samples must be nonnegative"));
        }
        if s == 0.0 {
            zeros += 1;
        } else {
            match grid.cell_of(s) {
                Some(i) => counts[i] += 1,
                None => beyond += 1,
            }
        }
    }
    let n = samples.len() as f64;
    let scale = 1.0 / (n * grid.step());
    Ok(MixedDensity::new_unchecked(
        *grid,
        zeros as f64 / n,
        counts.iter().map(|&c| c as f64 * scale).collect(),
        beyond as f64 / n,
    ))
}
