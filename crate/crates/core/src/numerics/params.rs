use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A bundle of trainable tensors visited in a fixed order.
///
/// Gradients use the same type as the parameters, so the visit order doubles
/// as the flattening order for optimizers and finite-difference checks.
pub trait Params: Clone {
    fn visit(&self, f: &mut dyn FnMut(&Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |t| n += t.len());
        n
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
        z
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |t| out.extend_from_slice(t.data()));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::dim("flat parameter vector", n, flat.len()));
        }
        let mut off = 0;
        self.visit_mut(&mut |t| {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        });
        Ok(())
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |t| ok &= t.is_finite());
        ok
    }
}

impl<P: Params> Params for Vec<P> {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        for p in self {
            p.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for p in self {
            p.visit_mut(f);
        }
    }
}
