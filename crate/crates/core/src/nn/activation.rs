use super::Tensor;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { output: None }
    }

    pub fn forward(&mut self, mut x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.output = record.then(|| x.clone());
        Ok(x)
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.take().ok_or(Error::NoForward)?;
        dy.same_shape(&y, "relu backward")?;
        for (d, &o) in dy.data_mut().iter_mut().zip(y.data()) {
            if o <= T::zero() {
                *d = T::zero();
            }
        }
        Ok(dy)
    }

    pub(crate) fn clear(&mut self) {
        self.output = None;
    }
}

/// Output stage `(tanh(x) + 1) / 2`, which lands in `[0, 1]`.
#[derive(Debug, Clone, Default)]
pub struct Tanh<T> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Tanh<T> {
    pub fn new() -> Self {
        Self { output: None }
    }

    pub fn forward(&mut self, mut x: Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let half = T::lit(0.5);
        x.data_mut().iter_mut().for_each(|v| *v = (v.tanh() + T::one()) * half);
        self.output = record.then(|| x.clone());
        Ok(x)
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.take().ok_or(Error::NoForward)?;
        dy.same_shape(&y, "tanh backward")?;
        let two = T::lit(2.0);
        for (d, &o) in dy.data_mut().iter_mut().zip(y.data()) {
            *d *= two * o * (T::one() - o);
        }
        Ok(dy)
    }

    pub(crate) fn clear(&mut self) {
        self.output = None;
    }
}
