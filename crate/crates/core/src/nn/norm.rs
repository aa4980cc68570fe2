use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Real, Result};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-sample, per-channel standardization with learned scale and shift.
#[derive(Debug, Clone)]
pub struct InstanceNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: T,
    cache: Option<NormCache<T>>,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> InstanceNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::parameter([channels, 1, 1, 1], vec![T::one(); channels]).unwrap(),
            beta: Tensor::parameter([channels, 1, 1, 1], vec![T::zero(); channels]).unwrap(),
            eps: T::lit(INSTANCE_NORM_EPS),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn forward(&mut self, mut x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::shape(alloc::format!(
                "instance norm over {} channels, got {c}",
                self.channels()
            )));
        }
        let m = h * w;
        if m < 2 {
            return Err(Error::shape("instance norm needs at least two spatial positions"));
        }
        let inv_m = T::one() / T::lit(m as f64);
        let mut inv_std = Vec::with_capacity(n * c);
        for b in 0..n {
            for ch in 0..c {
                let plane = &mut x.item_mut(b)[ch * m..(ch + 1) * m];
                let mean = plane.iter().copied().sum::<T>() * inv_m;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_m;
                let inv = T::one() / (var + self.eps).sqrt();
                plane.iter_mut().for_each(|v| *v = (*v - mean) * inv);
                inv_std.push(inv);
            }
        }
        let mut y = x;
        if record {
            self.cache = Some(NormCache { xhat: y.clone(), inv_std });
        } else {
            self.cache = None;
        }
        let (g, bt) = (self.gamma.data(), self.beta.data());
        for b in 0..n {
            for ch in 0..c {
                let plane = &mut y.item_mut(b)[ch * m..(ch + 1) * m];
                let (gc, bc) = (g[ch], bt[ch]);
                plane.iter_mut().for_each(|v| *v = *v * gc + bc);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(Error::NoForward)?;
        dy.same_shape(&cache.xhat, "instance norm backward")?;
        let [n, c, h, w] = dy.shape();
        let m = h * w;
        let inv_m = T::one() / T::lit(m as f64);
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        let gamma = self.gamma.data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                let xhat = &cache.xhat.item(b)[ch * m..(ch + 1) * m];
                let g = &mut dy.item_mut(b)[ch * m..(ch + 1) * m];
                let mut sum_dy = T::zero();
                let mut sum_dy_xhat = T::zero();
                for (&d, &xh) in g.iter().zip(xhat) {
                    sum_dy += d;
                    sum_dy_xhat += d * xh;
                }
                dgamma[ch] += sum_dy_xhat;
                dbeta[ch] += sum_dy;
                let scale = gamma[ch] * cache.inv_std[b * c + ch];
                let mean_d = sum_dy * inv_m;
                let mean_dx = sum_dy_xhat * inv_m;
                for (d, &xh) in g.iter_mut().zip(xhat) {
                    *d = scale * (*d - mean_d - xh * mean_dx);
                }
            }
        }
        for (a, v) in self.gamma.grad_mut().iter_mut().zip(dgamma) {
            *a += v;
        }
        for (a, v) in self.beta.grad_mut().iter_mut().zip(dbeta) {
            *a += v;
        }
        Ok(dy)
    }

    pub(crate) fn clear(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::random_tensor;

    #[test]
    fn standardizes_each_channel() {
        let x = random_tensor::<f64>([2, 3, 6, 6], 11).map(|v| 3.0 * v + 1.5);
        let y = InstanceNorm::new(3).forward(x, false).unwrap();
        for b in 0..2 {
            for c in 0..3 {
                let p = &y.item(b)[c * 36..(c + 1) * 36];
                let mean = p.iter().sum::<f64>() / 36.0;
                let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let x = Tensor::<f64>::full([1, 1, 4, 4], 2.5);
        let y = InstanceNorm::new(1).forward(x, false).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scale_invariant() {
        let x = random_tensor::<f64>([1, 2, 5, 5], 12);
        let a = InstanceNorm::new(2).forward(x.clone(), false).unwrap();
        let b = InstanceNorm::new(2).forward(x.map(|v| 10.0 * v), false).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_single_pixel() {
        assert!(InstanceNorm::<f64>::new(1).forward(Tensor::zeros([1, 1, 1, 1]), false).is_err());
    }
}
