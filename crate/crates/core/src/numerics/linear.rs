use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::{matmul_into, matmul_t_into};
use crate::numerics::{Params, Tensor};

/// Affine map `y = x·Wᵀ + b` applied to the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out × in]`
    pub weight: Tensor,
    /// `[out]`, absent for pure projections.
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        weight.expect_rank(2, "linear weight")?;
        if let Some(b) = &bias {
            b.expect_dims(&[weight.dim(0)], "linear bias")?;
        }
        Ok(Self { weight, bias })
    }

    /// Uniform init in `±1/sqrt(in)`.
    pub fn random(input: usize, output: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let weight = Tensor::from_fn(&[output, input], |_| rng.random_range(-bound..bound));
        let bias = bias.then(|| Tensor::from_fn(&[output], |_| rng.random_range(-bound..bound)));
        Self { weight, bias }
    }

    pub fn identity(n: usize, bias: bool) -> Self {
        Self {
            weight: Tensor::eye(n),
            bias: bias.then(|| Tensor::zeros(&[n])),
        }
    }

    pub fn zeros(input: usize, output: usize, bias: bool) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: bias.then(|| Tensor::zeros(&[output])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn output_dim(&self) -> usize {
        self.weight.dim(0)
    }

    /// Applies the map to every row of `x` (any rank, last axis = input).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let input = self.input_dim();
        let last = *x.dims().last().unwrap_or(&0);
        if last != input {
            return Err(Error::dim("linear input features", input, last));
        }
        let rows = x.len() / input.max(1);
        let out_dim = self.output_dim();
        let mut out = vec![0.0; rows * out_dim];
        if let Some(b) = &self.bias {
            for r in 0..rows {
                out[r * out_dim..(r + 1) * out_dim].copy_from_slice(b.data());
            }
        }
        matmul_t_into(x.data(), self.weight.data(), &mut out, rows, input, out_dim);
        let mut dims = x.dims().to_vec();
        *dims.last_mut().unwrap() = out_dim;
        Ok(Tensor::from_op(
            dims,
            out,
            x.precision().join(self.weight.precision()),
        ))
    }

    /// Returns `dx` and accumulates weight/bias gradients into `grad`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Linear) -> Result<Tensor> {
        let input = self.input_dim();
        let out_dim = self.output_dim();
        let rows = x.len() / input.max(1);
        if dy.len() != rows * out_dim {
            return Err(Error::dim("linear output gradient", rows * out_dim, dy.len()));
        }
        // dW += dyᵀ · x
        let gw = grad.weight.data_mut();
        for r in 0..rows {
            let dyr = &dy.data()[r * out_dim..(r + 1) * out_dim];
            let xr = &x.data()[r * input..(r + 1) * input];
            for (o, &g) in dyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut gw[o * input..(o + 1) * input];
                for (w, &xv) in row.iter_mut().zip(xr) {
                    *w += g * xv;
                }
            }
        }
        if let Some(gb) = &mut grad.bias {
            let gb = gb.data_mut();
            for r in 0..rows {
                for (b, g) in gb.iter_mut().zip(&dy.data()[r * out_dim..(r + 1) * out_dim]) {
                    *b += g;
                }
            }
        }
        let mut dx = vec![0.0; rows * input];
        matmul_into(dy.data(), self.weight.data(), &mut dx, rows, out_dim, input);
        Ok(Tensor::from_op(x.dims().to_vec(), dx, x.precision()))
    }
}

impl Params for Linear {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}
