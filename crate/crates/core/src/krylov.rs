//! Krylov–Schur iteration for the leading eigenpairs (largest modulus) of a
//! nonsymmetric linear operator given only through matrix-vector products.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Maximum subspace dimension.
    pub ncv: usize,
    /// Convergence threshold on the estimated residual norm.
    pub tol: f64,
    pub max_restarts: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            ncv: 40,
            tol: 1e-11,
            max_restarts: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    /// Unit 2-norm.
    pub vector: Vec<Complex64>,
    /// `‖A v − λ v‖` computed directly.
    pub residual: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(basis: &[Vec<Complex64>], w: &mut [Complex64], coeffs: Option<&mut [Complex64]>) {
    let mut acc = vec![ZERO; basis.len()];
    for _ in 0..2 {
        for (i, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            acc[i] += c;
            w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
        }
    }
    if let Some(out) = coeffs {
        out.copy_from_slice(&acc);
    }
}

/// Deterministic, non-degenerate start or replacement vector.
fn probe(dim: usize, salt: usize) -> Vec<Complex64> {
    let s = salt as f64;
    (0..dim)
        .map(|i| {
            let x = i as f64;
            Complex64::new(1.0 + 0.5 * (1.3 * x + 0.7 + s).sin(), 0.0)
        })
        .collect()
}

/// Complex Givens rotation `[c s; -s̄ c]` with `c` real mapping `(f, g)` to `(r, 0)`.
fn givens(f: Complex64, g: Complex64) -> (f64, Complex64) {
    if g == ZERO {
        return (1.0, ZERO);
    }
    if f == ZERO {
        return (0.0, g.conj() / g.norm());
    }
    let fa = f.norm();
    let r = fa.hypot(g.norm());
    (fa / r, (f / fa) * g.conj() / r)
}

/// Swaps the adjacent diagonal entries `k`, `k+1` of the upper-triangular `t`,
/// accumulating the unitary similarity into `q`.
fn swap_diagonal(t: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let (c, s) = givens(t[(k, k + 1)], t22 - t11);
    for j in k + 2..n {
        let (x, y) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = x * c + s * y;
        t[(k + 1, j)] = y * c - s.conj() * x;
    }
    let sc = s.conj();
    for i in 0..k {
        let (x, y) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = x * c + sc * y;
        t[(i, k + 1)] = y * c - s * x;
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    for i in 0..q.nrows() {
        let (x, y) = (q[(i, k)], q[(i, k + 1)]);
        q[(i, k)] = x * c + sc * y;
        q[(i, k + 1)] = y * c - s * x;
    }
}

/// Reorders the Schur form so diagonal moduli are nonincreasing.
fn sort_schur(t: &mut DMatrix<Complex64>, q: &mut DMatrix<Complex64>) {
    let n = t.nrows();
    for i in 0..n {
        let best = (i..n)
            .max_by(|&a, &b| t[(a, a)].norm().total_cmp(&t[(b, b)].norm()).then(b.cmp(&a)))
            .unwrap_or(i);
        for k in (i..best).rev() {
            swap_diagonal(t, q, k);
        }
    }
}

/// Eigenvector of the upper-triangular `t` for its `i`-th diagonal entry,
/// supported on the first `i + 1` coordinates, unit norm.
fn triangular_eigvec(t: &DMatrix<Complex64>, i: usize) -> Vec<Complex64> {
    let n = t.nrows();
    let lambda = t[(i, i)];
    let scale = (0..n).map(|k| t[(k, k)].norm()).fold(0.0, f64::max).max(1e-300);
    let mut y = vec![ZERO; n];
    y[i] = Complex64::new(1.0, 0.0);
    for r in (0..i).rev() {
        let rhs: Complex64 = (r + 1..=i).map(|c| t[(r, c)] * y[c]).sum();
        let mut d = t[(r, r)] - lambda;
        if d.norm() < 1e-14 * scale {
            d = Complex64::new(1e-14 * scale, 0.0);
        }
        y[r] = -rhs / d;
    }
    let s = norm(&y);
    y.iter_mut().for_each(|v| *v /= s);
    y
}

/// Leading `nev` eigenpairs of the `dim`-dimensional operator `op`, which
/// writes `A x` into its second argument.
pub fn krylov_schur<F>(dim: usize, nev: usize, op: F, opts: KrylovOptions) -> Result<Vec<EigenPair>>
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    if dim == 0 || nev == 0 {
        return Ok(Vec::new());
    }
    let nev = nev.min(dim);
    let ncv = opts.ncv.max(2 * nev + 1).min(dim);
    let nev = nev.min(ncv);

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(ncv + 1);
    let mut v0 = probe(dim, 0);
    let s = norm(&v0);
    v0.iter_mut().for_each(|x| *x /= s);
    basis.push(v0);
    let mut h = DMatrix::<Complex64>::zeros(ncv + 1, ncv);
    let mut p = 0;
    let mut worst = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        for j in p..ncv {
            let mut w = vec![ZERO; dim];
            op(&basis[j], &mut w);
            let before = norm(&w);
            let mut coeffs = vec![ZERO; j + 1];
            orthogonalize(&basis[..=j], &mut w, Some(&mut coeffs));
            for (i, c) in coeffs.into_iter().enumerate() {
                h[(i, j)] += c;
            }
            let beta = norm(&w);
            if j + 1 == dim {
                h[(j + 1, j)] = ZERO;
                basis.push(vec![ZERO; dim]);
            } else if beta <= 1e-12 * before.max(1e-300) {
                // invariant subspace: continue with a fresh orthogonal direction
                h[(j + 1, j)] = ZERO;
                let mut fresh = probe(dim, j + 1 + restart * ncv);
                orthogonalize(&basis[..=j], &mut fresh, None);
                let s = norm(&fresh);
                fresh.iter_mut().for_each(|x| *x /= s);
                basis.push(fresh);
            } else {
                h[(j + 1, j)] = Complex64::new(beta, 0.0);
                w.iter_mut().for_each(|x| *x /= beta);
                basis.push(w);
            }
        }

        let square = h.rows(0, ncv).into_owned();
        let schur = Schur::try_new(square, 1e-15, 100_000)
            .ok_or(Error::Convergence { iterations: restart, residual: f64::NAN })?;
        let (mut q, mut t) = schur.unpack();
        sort_schur(&mut t, &mut q);
        let b: Vec<Complex64> = (0..ncv)
            .map(|c| (0..ncv).map(|r| h[(ncv, r)] * q[(r, c)]).sum())
            .collect();

        let estimates: Vec<f64> = (0..nev)
            .map(|i| {
                let y = triangular_eigvec(&t, i);
                b.iter().zip(&y).map(|(x, v)| x * v).sum::<Complex64>().norm()
            })
            .collect();
        worst = estimates.iter().copied().fold(0.0, f64::max);

        if worst <= opts.tol {
            let pairs = (0..nev)
                .map(|i| {
                    let y = triangular_eigvec(&t, i);
                    let qy: Vec<Complex64> = (0..ncv).map(|r| (0..ncv).map(|c| q[(r, c)] * y[c]).sum()).collect();
                    let mut x = vec![ZERO; dim];
                    for (v, coef) in basis.iter().zip(&qy) {
                        x.iter_mut().zip(v).for_each(|(a, b)| *a += coef * b);
                    }
                    let s = norm(&x);
                    x.iter_mut().for_each(|a| *a /= s);
                    let lambda = t[(i, i)];
                    let mut ax = vec![ZERO; dim];
                    op(&x, &mut ax);
                    let residual = ax.iter().zip(&x).map(|(a, v)| (a - lambda * v).norm_sqr()).sum::<f64>().sqrt();
                    EigenPair {
                        value: lambda,
                        vector: x,
                        residual,
                    }
                })
                .collect();
            return Ok(pairs);
        }
        if restart == opts.max_restarts {
            break;
        }

        // thick restart on the leading Schur vectors
        p = (nev + (ncv - nev) / 2).min(ncv - 1);
        let residual_vec = basis.pop().expect("basis has ncv + 1 vectors");
        let mut kept = Vec::with_capacity(ncv + 1);
        for c in 0..p {
            let mut v = vec![ZERO; dim];
            for (r, b) in basis.iter().enumerate() {
                let coef = q[(r, c)];
                if coef != ZERO {
                    v.iter_mut().zip(b).for_each(|(a, x)| *a += coef * x);
                }
            }
            kept.push(v);
        }
        kept.push(residual_vec);
        basis = kept;
        h.fill(ZERO);
        for r in 0..p {
            for c in r..p {
                h[(r, c)] = t[(r, c)];
            }
        }
        for c in 0..p {
            h[(p, c)] = b[c];
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_restarts,
        residual: worst,
    })
}
