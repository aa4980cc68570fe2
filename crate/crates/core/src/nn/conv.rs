//! Convolution and transposed convolution via chunked im2col + GEMM.

use alloc::vec;

use super::{LayerKind, LayerSpec, Tensor};
use crate::real::{gemm, MatRef};
use crate::{Error, Real, Result};

/// Upper bound on im2col buffer elements; larger outputs are processed in row chunks.
const COL_BUDGET: usize = 1 << 21;

/// Sliding-window geometry: an image of `c x h x w` seen through a `k x k`
/// kernel at `stride`/`pad`, producing a `gh x gw` grid of positions.
#[derive(Debug, Clone, Copy)]
struct Patches {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gh: usize,
    gw: usize,
}

impl Patches {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn chunk_rows(&self) -> usize {
        (COL_BUDGET / (self.rows() * self.gw).max(1)).clamp(1, self.gh.max(1))
    }

    #[inline]
    fn source(&self, g: usize, kk: usize, extent: usize) -> Option<usize> {
        let pos = (g * self.stride + kk) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Gathers grid rows `r0..r1` into `col` (`rows() x (r1 - r0) * gw`).
    fn im2col<T: Real>(&self, src: &[T], r0: usize, r1: usize, col: &mut [T]) {
        let p = (r1 - r0) * self.gw;
        for c in 0..self.c {
            let plane = &src[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for gy in r0..r1 {
                        let out = &mut dst[(gy - r0) * self.gw..(gy - r0 + 1) * self.gw];
                        match self.source(gy, ki, self.h) {
                            None => out.iter_mut().for_each(|v| *v = T::zero()),
                            Some(iy) => {
                                let line = &plane[iy * self.w..(iy + 1) * self.w];
                                for (gx, o) in out.iter_mut().enumerate() {
                                    *o = match self.source(gx, kj, self.w) {
                                        Some(ix) => line[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `col` for grid rows `r0..r1` back into `dst`.
    fn col2im<T: Real>(&self, col: &[T], r0: usize, r1: usize, dst: &mut [T]) {
        let p = (r1 - r0) * self.gw;
        for c in 0..self.c {
            let plane = &mut dst[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let srcrow = &col[row * p..(row + 1) * p];
                    for gy in r0..r1 {
                        let Some(iy) = self.source(gy, ki, self.h) else { continue };
                        let vals = &srcrow[(gy - r0) * self.gw..(gy - r0 + 1) * self.gw];
                        let line = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for (gx, &v) in vals.iter().enumerate() {
                            if let Some(ix) = self.source(gx, kj, self.w) {
                                line[ix] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(y: &mut [T], bias: &[T], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        y[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad<T: Real>(dy: &[T], db: &mut [T], plane: usize) {
    for (c, g) in db.iter_mut().enumerate() {
        *g += dy[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
    }
}

/// Output extent of a convolution.
pub fn conv_out(extent: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (extent + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

/// Output extent of a transposed convolution.
pub fn conv_transpose_out(extent: usize, k: usize, stride: usize, pad: usize, output_pad: usize) -> Option<usize> {
    ((extent.max(1) - 1) * stride + k + output_pad).checked_sub(2 * pad)
}

/// Direct cross-correlation layer. Weights are `out x in x k x k`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
    /// Skip parameter gradients (frozen loss network).
    pub frozen: bool,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize, pad: usize) -> Result<Self> {
        let [co, _, kh, kw] = weight.shape();
        if kh != kw || bias.numel() != co || stride == 0 {
            return Err(Error::shape("conv weight must be out x in x k x k with out biases"));
        }
        Ok(Self { weight, bias, stride, pad, frozen: false, input: None })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel: self.kernel(),
            stride: self.stride,
            in_channels: self.in_channels(),
            out_channels: self.out_channels(),
        }
    }

    fn patches(&self, h: usize, w: usize) -> Result<Patches> {
        let k = self.kernel();
        let gh = conv_out(h, k, self.stride, self.pad);
        let gw = conv_out(w, k, self.stride, self.pad);
        match (gh, gw) {
            (Some(gh), Some(gw)) if gh > 0 && gw > 0 => Ok(Patches {
                c: self.in_channels(),
                h,
                w,
                k,
                stride: self.stride,
                pad: self.pad,
                gh,
                gw,
            }),
            _ => Err(Error::shape(alloc::format!("{h}x{w} input too small for kernel {k}"))),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.in_channels() {
            return Err(Error::shape(alloc::format!(
                "conv expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let g = self.patches(h, w)?;
        let co = self.out_channels();
        let plane = g.gh * g.gw;
        let mut y = Tensor::zeros([n, co, g.gh, g.gw]);
        let chunk = g.chunk_rows();
        let mut col = vec![T::zero(); g.rows() * chunk * g.gw];
        let wmat = MatRef::new(self.weight.data(), co, g.rows());
        for b in 0..n {
            let src = x.item(b);
            let dst = y.item_mut(b);
            let mut r0 = 0;
            while r0 < g.gh {
                let r1 = (r0 + chunk).min(g.gh);
                let p = (r1 - r0) * g.gw;
                g.im2col(src, r0, r1, &mut col[..g.rows() * p]);
                gemm(
                    T::one(),
                    wmat,
                    MatRef::new(&col[..g.rows() * p], g.rows(), p),
                    T::zero(),
                    &mut dst[r0 * g.gw..],
                    plane,
                );
                r0 = r1;
            }
            add_bias(dst, self.bias.data(), plane);
        }
        self.input = record.then_some(x);
        y.debug_check_finite("conv2d");
        Ok(y)
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or(Error::NoForward)?;
        let [n, _, h, w] = x.shape();
        let g = self.patches(h, w)?;
        let co = self.out_channels();
        if dy.shape() != [n, co, g.gh, g.gw] {
            return Err(Error::shape("conv backward: gradient shape"));
        }
        let plane = g.gh * g.gw;
        let mut dx = Tensor::zeros(x.shape());
        let chunk = g.chunk_rows();
        let mut col = vec![T::zero(); g.rows() * chunk * g.gw];
        let mut dw = vec![T::zero(); self.weight.numel()];
        let mut db = vec![T::zero(); co];
        for b in 0..n {
            let dyb = dy.item(b);
            let dxb = dx.item_mut(b);
            let mut r0 = 0;
            while r0 < g.gh {
                let r1 = (r0 + chunk).min(g.gh);
                let p = (r1 - r0) * g.gw;
                let dy_chunk = MatRef::strided(&dyb[r0 * g.gw..], co, p, plane);
                if !self.frozen {
                    g.im2col(x.item(b), r0, r1, &mut col[..g.rows() * p]);
                    gemm(
                        T::one(),
                        dy_chunk,
                        MatRef::new(&col[..g.rows() * p], g.rows(), p).t(),
                        T::one(),
                        &mut dw,
                        g.rows(),
                    );
                }
                gemm(
                    T::one(),
                    MatRef::new(self.weight.data(), co, g.rows()).t(),
                    dy_chunk,
                    T::zero(),
                    &mut col[..g.rows() * p],
                    p,
                );
                g.col2im(&col[..g.rows() * p], r0, r1, dxb);
                r0 = r1;
            }
            if !self.frozen {
                accumulate_bias_grad(dyb, &mut db, plane);
            }
        }
        if !self.frozen {
            for (a, v) in self.weight.grad_mut().iter_mut().zip(dw) {
                *a += v;
            }
            for (a, v) in self.bias.grad_mut().iter_mut().zip(db) {
                *a += v;
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear(&mut self) {
        self.input = None;
    }
}

/// Transposed convolution (adjoint of [`Conv2d`] in its input). Weights are
/// `in x out x k x k`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
    input: Option<Tensor<T>>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<Self> {
        let [_, co, kh, kw] = weight.shape();
        if kh != kw || bias.numel() != co || stride == 0 || output_pad >= stride {
            return Err(Error::shape("invalid transposed convolution parameters"));
        }
        Ok(Self { weight, bias, stride, pad, output_pad, input: None })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::ConvTranspose,
            kernel: self.kernel(),
            stride: self.stride,
            in_channels: self.in_channels(),
            out_channels: self.out_channels(),
        }
    }

    /// Patch geometry over the output image, with the input as the grid.
    fn patches(&self, h: usize, w: usize) -> Result<Patches> {
        let k = self.kernel();
        let oh = conv_transpose_out(h, k, self.stride, self.pad, self.output_pad);
        let ow = conv_transpose_out(w, k, self.stride, self.pad, self.output_pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 && h > 0 && w > 0 => Ok(Patches {
                c: self.out_channels(),
                h: oh,
                w: ow,
                k,
                stride: self.stride,
                pad: self.pad,
                gh: h,
                gw: w,
            }),
            _ => Err(Error::shape(alloc::format!("{h}x{w} input invalid for transposed kernel {k}"))),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.in_channels() {
            return Err(Error::shape(alloc::format!(
                "transposed conv expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let g = self.patches(h, w)?;
        let co = self.out_channels();
        let mut y = Tensor::zeros([n, co, g.h, g.w]);
        let chunk = g.chunk_rows();
        let mut col = vec![T::zero(); g.rows() * chunk * g.gw];
        let wt = MatRef::new(self.weight.data(), c, g.rows()).t();
        for b in 0..n {
            let src = x.item(b);
            let dst = y.item_mut(b);
            let mut r0 = 0;
            while r0 < h {
                let r1 = (r0 + chunk).min(h);
                let p = (r1 - r0) * w;
                gemm(
                    T::one(),
                    wt,
                    MatRef::strided(&src[r0 * w..], c, p, h * w),
                    T::zero(),
                    &mut col[..g.rows() * p],
                    p,
                );
                g.col2im(&col[..g.rows() * p], r0, r1, dst);
                r0 = r1;
            }
            add_bias(dst, self.bias.data(), g.h * g.w);
        }
        self.input = record.then_some(x);
        y.debug_check_finite("conv_transpose2d");
        Ok(y)
    }

    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or(Error::NoForward)?;
        let [n, c, h, w] = x.shape();
        let g = self.patches(h, w)?;
        let co = self.out_channels();
        if dy.shape() != [n, co, g.h, g.w] {
            return Err(Error::shape("transposed conv backward: gradient shape"));
        }
        let mut dx = Tensor::zeros(x.shape());
        let chunk = g.chunk_rows();
        let mut col = vec![T::zero(); g.rows() * chunk * g.gw];
        let mut dw = vec![T::zero(); self.weight.numel()];
        let mut db = vec![T::zero(); co];
        for b in 0..n {
            let dyb = dy.item(b);
            let xb = x.item(b);
            let dxb = dx.item_mut(b);
            let mut r0 = 0;
            while r0 < h {
                let r1 = (r0 + chunk).min(h);
                let p = (r1 - r0) * w;
                g.im2col(dyb, r0, r1, &mut col[..g.rows() * p]);
                let dcols = MatRef::new(&col[..g.rows() * p], g.rows(), p);
                gemm(
                    T::one(),
                    MatRef::new(self.weight.data(), c, g.rows()),
                    dcols,
                    T::zero(),
                    &mut dxb[r0 * w..],
                    h * w,
                );
                gemm(
                    T::one(),
                    MatRef::strided(&xb[r0 * w..], c, p, h * w),
                    dcols.t(),
                    T::one(),
                    &mut dw,
                    g.rows(),
                );
                r0 = r1;
            }
            accumulate_bias_grad(dyb, &mut db, g.h * g.w);
        }
        for (a, v) in self.weight.grad_mut().iter_mut().zip(dw) {
            *a += v;
        }
        for (a, v) in self.bias.grad_mut().iter_mut().zip(db) {
            *a += v;
        }
        Ok(dx)
    }

    pub(crate) fn clear(&mut self) {
        self.input = None;
    }
}

/// Reference convolution used by tests: six nested loops, no im2col.
#[cfg(test)]
pub(crate) fn naive_conv<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
    let [n, c, h, wd] = x.shape();
    let [co, _, k, _] = w.shape();
    let oh = conv_out(h, k, stride, pad).unwrap();
    let ow = conv_out(wd, k, stride, pad).unwrap();
    let mut y = Tensor::zeros([n, co, oh, ow]);
    for bi in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((bi * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((o * c + ci) * k + ki) * k + kj];
                            }
                        }
                    }
                    y.data_mut()[((bi * co + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::random_tensor;

    fn conv(w: Tensor<f64>, stride: usize, pad: usize) -> Conv2d<f64> {
        let co = w.shape()[0];
        Conv2d::new(w, Tensor::zeros([co, 1, 1, 1]), stride, pad).unwrap()
    }

    #[test]
    fn ones_kernel_center_is_nine() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let mut c = conv(Tensor::full([1, 1, 3, 3], 1.0), 1, 1);
        let y = c.forward(x, false).unwrap();
        assert_eq!(y.shape(), [1, 1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = random_tensor([2, 3, 5, 7], 1);
        let mut w = Tensor::zeros([3, 3, 3, 3]);
        for c in 0..3 {
            w.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let y = conv(w, 1, 1).forward(x.clone(), false).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn im2col_conv_matches_naive_loops() {
        for (stride, k) in [(1, 3), (2, 3), (1, 5), (2, 1)] {
            let x = random_tensor::<f64>([2, 3, 8, 8], 2);
            let w = random_tensor([4, 3, k, k], 3);
            let b = random_tensor([4, 1, 1, 1], 4);
            let want = naive_conv(&x, &w, &b, stride, k / 2);
            let got = Conv2d::new(w, b, stride, k / 2).unwrap().forward(x, false).unwrap();
            assert_eq!(got.shape(), want.shape());
            let err = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "stride {stride} k {k}: {err}");
        }
    }

    #[test]
    fn transpose_stride_two_doubles_extent() {
        let x = random_tensor::<f64>([1, 1, 4, 4], 5);
        let mut t = ConvTranspose2d::new(random_tensor([1, 1, 3, 3], 6), Tensor::zeros([1, 1, 1, 1]), 2, 1, 1).unwrap();
        assert_eq!(t.forward(x, false).unwrap().shape(), [1, 1, 8, 8]);
    }

    #[test]
    fn transpose_impulse_stamps_kernel() {
        let mut x = Tensor::<f64>::zeros([1, 1, 4, 4]);
        x.data_mut()[5] = 1.0; // (1, 1)
        let kernel = random_tensor([1, 1, 3, 3], 7);
        let mut t = ConvTranspose2d::new(kernel.clone(), Tensor::zeros([1, 1, 1, 1]), 1, 1, 0).unwrap();
        let y = t.forward(x, false).unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                assert_eq!(y.data()[ky * 4 + kx], kernel.data()[ky * 3 + kx]);
            }
        }
    }

    #[test]
    fn chunked_path_matches_single_chunk() {
        // 1 x 64 x 96 x 96 with a 3x3 kernel exceeds the column budget.
        let x = random_tensor::<f64>([1, 64, 96, 96], 8);
        let w = random_tensor([2, 64, 3, 3], 9);
        let b = Tensor::zeros([2, 1, 1, 1]);
        let g = Conv2d::new(w.clone(), b.clone(), 1, 1).unwrap().patches(96, 96).unwrap();
        assert!(g.chunk_rows() < 96);
        let got = Conv2d::new(w.clone(), b.clone(), 1, 1).unwrap().forward(x.clone(), false).unwrap();
        let want = naive_conv(&x, &w, &b, 1, 1);
        let err = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut c = conv(random_tensor([1, 1, 3, 3], 1), 1, 1);
        assert_eq!(c.backward(Tensor::zeros([1, 1, 3, 3])).unwrap_err(), Error::NoForward);
    }
}
