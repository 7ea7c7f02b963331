use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Interleaved sinusoidal encoding `[sin(v·ω₀), cos(v·ω₀), sin(v·ω₁), …]`
/// with `ωᵢ = 10000^(-2i/dim)`.
pub fn sinusoidal_encode(value: u64, dim: usize) -> Result<Tensor> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::config(format!(
            "sinusoidal encoding dim must be even and positive, got {dim}"
        )));
    }
    let half = dim / 2;
    let v = value as f64;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(2.0 * i as f64 / dim as f64) * 10000f64.ln()).exp();
        let arg = v * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(Tensor::vector(out))
}
