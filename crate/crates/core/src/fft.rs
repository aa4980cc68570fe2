//! Radix-2 FFT and a packed real-input transform built on it.

// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// In-place iterative radix-2 complex FFT of a fixed power-of-two size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Fft {
    /// Panics unless `n` is a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT size must be a power of two");
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { n, twiddles, bitrev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform, `X[k] = sum x[n] e^{-2 pi i k n / N}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, false);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n);
        for i in 0..self.n {
            let j = self.bitrev[i] as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Real-input FFT of even power-of-two size `n`, computed with one complex
/// FFT of size `n / 2`. Produces the `n / 2 + 1` non-negative frequency bins.
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    half: Fft,
    twiddles: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_power_of_two(), "real FFT size must be a power of two >= 2");
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { n, half: Fft::new(n / 2), twiddles, scratch: alloc::vec![Complex64::default(); n / 2] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn forward(&mut self, input: &[f64], output: &mut [Complex64]) {
        let h = self.n / 2;
        assert_eq!(input.len(), self.n);
        assert_eq!(output.len(), h + 1);
        for (k, z) in self.scratch.iter_mut().enumerate() {
            *z = Complex64::new(input[2 * k], input[2 * k + 1]);
        }
        self.half.forward(&mut self.scratch);
        let z = &self.scratch;
        for k in 0..=h {
            let zk = z[k % h];
            let zc = z[(h - k) % h].conj();
            let even = (zk + zc) * 0.5;
            let odd = (zk - zc) * Complex64::new(0.0, -0.5);
            let w = if k == h { Complex64::new(-1.0, 0.0) } else { self.twiddles[k] };
            output[k] = even + w * odd;
        }
    }

    /// Inverse of [`RealFft::forward`] with `1/N` scaling. Imaginary parts of
    /// the DC and Nyquist bins are ignored, which equals taking the real part
    /// of the Hermitian-extended inverse.
    pub fn inverse(&mut self, input: &[Complex64], output: &mut [f64]) {
        let h = self.n / 2;
        assert_eq!(input.len(), h + 1);
        assert_eq!(output.len(), self.n);
        let x0 = Complex64::new(input[0].re, 0.0);
        let xh = Complex64::new(input[h].re, 0.0);
        let at = |k: usize| {
            if k == 0 {
                x0
            } else if k == h {
                xh
            } else {
                input[k]
            }
        };
        for k in 0..h {
            let xk = at(k);
            let xc = at(h - k).conj();
            let even = (xk + xc) * 0.5;
            let odd = (xk - xc) * 0.5 * self.twiddles[k].conj();
            self.scratch[k] = even + odd * Complex64::new(0.0, 1.0);
        }
        self.half.inverse(&mut self.scratch);
        for (k, z) in self.scratch.iter().enumerate() {
            output[2 * k] = z.re;
            output[2 * k + 1] = z.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::default(), |acc, (t, &v)| {
                    acc + v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64)
                })
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % 97) as f64 / 48.0 - 1.0).collect()
    }

    #[test]
    fn complex_fft_matches_naive_dft() {
        for &n in &[1usize, 2, 4, 16, 64] {
            let x: Vec<Complex64> = signal(2 * n)
                .chunks(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            let want = naive_dft(&x);
            let mut got = x.clone();
            Fft::new(n).forward(&mut got);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-9);
            }
            Fft::new(n).inverse(&mut got);
            for (a, b) in got.iter().zip(&x) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn real_fft_matches_naive_dft_and_inverts() {
        for &n in &[2usize, 8, 32, 256] {
            let x = signal(n);
            let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let want = naive_dft(&xc);
            let mut rf = RealFft::new(n);
            let mut spec = vec![Complex64::default(); n / 2 + 1];
            rf.forward(&x, &mut spec);
            for k in 0..=n / 2 {
                assert!((spec[k] - want[k]).norm() < 1e-9, "n={n} k={k}");
            }
            let mut back = vec![0.0; n];
            rf.inverse(&spec, &mut back);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
