//! Single-head scaled dot-product cross-attention with an explicit backward pass.
//!
//! `Y = softmax(Q·Kᵀ / sqrt(dh)) · V · W_outᵀ` where `Q = x·W_qᵀ`, `K = ctx·W_kᵀ`,
//! `V = ctx·W_vᵀ`. There are no biases, so a zero context gives zero keys and
//! a uniform softmax. The residual add is left to the caller.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Params, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// `[dh × c]`
    pub w_q: Tensor,
    /// `[dh × c_ctx]`
    pub w_k: Tensor,
    /// `[dh × c_ctx]`
    pub w_v: Tensor,
    /// `[c × dh]`
    pub w_out: Tensor,
}

impl AttentionWeights {
    pub fn new(w_q: Tensor, w_k: Tensor, w_v: Tensor, w_out: Tensor) -> Result<Self> {
        let w = Self { w_q, w_k, w_v, w_out };
        w.validate()?;
        Ok(w)
    }

    pub fn random(dim_model: usize, dim_ctx: usize, dim_head: usize, rng: &mut impl Rng) -> Self {
        let mut mat = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Tensor::from_fn(&[rows, cols], |_| rng.random_range(-bound..bound))
        };
        Self {
            w_q: mat(dim_head, dim_model),
            w_k: mat(dim_head, dim_ctx),
            w_v: mat(dim_head, dim_ctx),
            w_out: mat(dim_model, dim_head),
        }
    }

    pub fn dim_model(&self) -> usize {
        self.w_q.dim(1)
    }

    pub fn dim_ctx(&self) -> usize {
        self.w_k.dim(1)
    }

    pub fn dim_head(&self) -> usize {
        self.w_q.dim(0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_out", &self.w_out),
        ] {
            m.expect_rank(2, name)?;
        }
        let dh = self.w_q.dim(0);
        if dh == 0 {
            return Err(Error::config("dim_head must be positive"));
        }
        self.w_k.expect_dims(&[dh, self.w_k.dim(1)], "w_k")?;
        self.w_v.expect_dims(&[dh, self.w_k.dim(1)], "w_v")?;
        self.w_out.expect_dims(&[self.w_q.dim(1), dh], "w_out")?;
        Ok(())
    }
}

impl Params for AttentionWeights {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        f(&self.w_q);
        f(&self.w_k);
        f(&self.w_v);
        f(&self.w_out);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.w_q);
        f(&mut self.w_k);
        f(&mut self.w_v);
        f(&mut self.w_out);
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor,
    ctx: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Tensor,
    mixed: Tensor,
}

impl AttentionCache {
    /// Softmax matrix `[n_q × n_k]`.
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }
}

pub struct AttentionGrads {
    pub dx: Tensor,
    pub dctx: Tensor,
}

fn check_inputs(x: &Tensor, ctx: &Tensor, w: &AttentionWeights) -> Result<()> {
    x.expect_rank(2, "query input")?;
    ctx.expect_rank(2, "context input")?;
    if x.dim(0) == 0 {
        return Err(Error::dim("query rows (n_q >= 1)", 1, 0));
    }
    if ctx.dim(0) == 0 {
        return Err(Error::dim("key rows (n_k >= 1)", 1, 0));
    }
    if x.dim(1) != w.dim_model() {
        return Err(Error::dim("query channels", w.dim_model(), x.dim(1)));
    }
    if ctx.dim(1) != w.dim_ctx() {
        return Err(Error::dim("context channels", w.dim_ctx(), ctx.dim(1)));
    }
    w.validate()
}

fn softmax_rows(scores: &mut [f64], cols: usize) {
    for row in scores.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

pub fn cross_attention(x: &Tensor, ctx: &Tensor, w: &AttentionWeights) -> Result<Tensor> {
    Ok(cross_attention_forward(x, ctx, w)?.0)
}

pub fn cross_attention_forward(
    x: &Tensor,
    ctx: &Tensor,
    w: &AttentionWeights,
) -> Result<(Tensor, AttentionCache)> {
    check_inputs(x, ctx, w)?;
    let q = x.matmul_t(&w.w_q)?;
    let k = ctx.matmul_t(&w.w_k)?;
    let v = ctx.matmul_t(&w.w_v)?;
    let scale = 1.0 / (w.dim_head() as f64).sqrt();
    let scores = q.matmul_t(&k)?.scale(scale);
    let n_k = ctx.dim(0);
    let precision = scores.precision();
    let mut p = scores.into_data();
    softmax_rows(&mut p, n_k);
    let probs = Tensor::from_op(vec![x.dim(0), n_k], p, precision);
    let mixed = probs.matmul(&v)?;
    let y = mixed.matmul_t(&w.w_out)?;
    Ok((
        y,
        AttentionCache {
            x: x.clone(),
            ctx: ctx.clone(),
            q,
            k,
            v,
            probs,
            mixed,
        },
    ))
}

/// Backpropagates `dy` through one attention call, accumulating weight
/// gradients into `grad`.
pub fn cross_attention_backward(
    cache: &AttentionCache,
    dy: &Tensor,
    w: &AttentionWeights,
    grad: &mut AttentionWeights,
) -> Result<AttentionGrads> {
    let scale = 1.0 / (w.dim_head() as f64).sqrt();
    // Y = M · W_outᵀ
    grad.w_out.add_assign(&dy.t_matmul(&cache.mixed)?)?;
    let d_mixed = dy.matmul(&w.w_out)?;
    // M = P · V
    let d_probs = d_mixed.matmul_t(&cache.v)?;
    let d_v = cache.probs.t_matmul(&d_mixed)?;
    // softmax Jacobian per row
    let n_k = cache.probs.dim(1);
    let mut d_scores = vec![0.0; cache.probs.len()];
    for ((ds, p), dp) in d_scores
        .chunks_mut(n_k)
        .zip(cache.probs.data().chunks(n_k))
        .zip(d_probs.data().chunks(n_k))
    {
        let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
        for j in 0..n_k {
            ds[j] = p[j] * (dp[j] - dot) * scale;
        }
    }
    let d_scores = Tensor::new(cache.probs.dims(), d_scores)?;
    let d_q = d_scores.matmul(&cache.k)?;
    let d_k = d_scores.t_matmul(&cache.q)?;

    grad.w_q.add_assign(&d_q.t_matmul(&cache.x)?)?;
    grad.w_k.add_assign(&d_k.t_matmul(&cache.ctx)?)?;
    grad.w_v.add_assign(&d_v.t_matmul(&cache.ctx)?)?;

    let dx = d_q.matmul(&w.w_q)?;
    let dctx = d_k.matmul(&w.w_k)?.add(&d_v.matmul(&w.w_v)?)?;
    Ok(AttentionGrads { dx, dctx })
}
