//! Small layer building blocks over [`ParamSet`] and [`Tape`].

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::diffcore::{ParamSet, Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Glorot-uniform weights of the given shape.
fn glorot<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches")
}

/// Fully connected layer `x W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.push(format!("{name}.weight"), glorot(rng, &[in_dim, out_dim], in_dim, out_dim));
        let bias = params.push(format!("{name}.bias"), Tensor::zeros([1, out_dim]));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, vars[self.weight])?;
        tape.add(h, vars[self.bias])
    }
}

/// Valid stride-1 convolution with weights `[F, C, K, K]` and bias `[F]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: usize,
    pub bias: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let k2 = kernel * kernel;
        let weight = params.push(
            format!("{name}.weight"),
            glorot(rng, &[out_channels, in_channels, kernel, kernel], in_channels * k2, out_channels * k2),
        );
        let bias = params.push(format!("{name}.bias"), Tensor::zeros([out_channels]));
        Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        tape.conv2d(x, vars[self.weight], vars[self.bias])
    }
}
