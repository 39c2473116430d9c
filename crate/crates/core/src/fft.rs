//! In-place iterative radix-2 FFT and linear convolution of nonnegative
//! sequences.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// In-place FFT of a power-of-two length buffer. `inverse` applies the
/// conjugate transform and the `1/n` scaling.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        // twiddles computed directly per level to avoid drift from repeated products
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::new((ang * k as f64).cos(), (ang * k as f64).sin()))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Linear convolution `a * b`, truncated to the first `keep` entries.
/// Tiny negative round-off is clamped to zero.
pub fn convolve_truncated(a: &[f64], b: &[f64], keep: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![0.0; keep];
    }
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(size, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(size, Complex64::new(0.0, 0.0));
    fft_in_place(&mut fa, false);
    fft_in_place(&mut fb, false);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    fft_in_place(&mut fa, true);
    (0..keep)
        .map(|i| if i < full { fa[i].re.max(0.0) } else { 0.0 })
        .collect()
}
