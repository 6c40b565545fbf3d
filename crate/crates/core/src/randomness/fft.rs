//! Complex DFT of arbitrary length: iterative radix-2 for powers of two,
//! Bluestein's chirp-z otherwise.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math;

fn twiddle(angle: f64) -> Complex64 {
    let (s, c) = math::sin_cos(angle);
    Complex64::new(c, s)
}

/// In-place forward transform, `X_k = sum_j x_j exp(-2 pi i j k / n)`; `n` must be a power of two.
fn radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let shift = usize::BITS - n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> shift;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let roots: Vec<Complex64> = (0..half).map(|k| twiddle(sign * 2.0 * PI * k as f64 / len as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * roots[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n.is_power_of_two() || n == 0 {
        let mut out = x.to_vec();
        radix2(&mut out, false);
        return out;
    }
    // chirp w_j = exp(-i pi j^2 / n); j^2 is reduced mod 2n to keep the angle small
    let two_n = 2 * n as u128;
    let chirp: Vec<Complex64> = (0..n)
        .map(|j| {
            let jj = (j as u128 * j as u128 % two_n) as f64;
            twiddle(-PI * jj / n as f64)
        })
        .collect();
    let m = (2 * n - 1).next_power_of_two();
    let mut a = alloc::vec![Complex64::new(0.0, 0.0); m];
    for j in 0..n {
        a[j] = x[j] * chirp[j];
    }
    let mut b = alloc::vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for j in 1..n {
        b[j] = chirp[j].conj();
        b[m - j] = chirp[j].conj();
    }
    radix2(&mut a, false);
    radix2(&mut b, false);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    radix2(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}
