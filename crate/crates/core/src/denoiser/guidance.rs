use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Reference-image scale.
    pub r_i: f64,
    /// Audio scale.
    pub r_a: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { r_i: 2.0, r_a: 7.5 }
    }
}

impl GuidanceConfig {
    pub fn new(r_i: f64, r_a: f64) -> Result<Self> {
        let g = Self { r_i, r_a };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("r_i", self.r_i), ("r_a", self.r_a)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Range {
                    what: what.into(),
                    value: v,
                    min: 0.0,
                    max: f64::INFINITY,
                });
            }
        }
        Ok(())
    }
}

/// `ε_u + r_i·(ε_i − ε_u) + r_a·(ε_ia − ε_i)`.
///
/// Evaluated in the equivalent affine form
/// `(1 − r_i)·ε_u + (r_i − r_a)·ε_i + r_a·ε_ia`, which returns a branch
/// exactly when the scales select it.
pub fn guided_predict(
    eps_uncond: &Tensor,
    eps_img: &Tensor,
    eps_img_audio: &Tensor,
    g: &GuidanceConfig,
) -> Result<Tensor> {
    if eps_uncond.dims() != eps_img.dims() {
        return Err(Error::dim("image branch", eps_uncond.len(), eps_img.len()));
    }
    if eps_uncond.dims() != eps_img_audio.dims() {
        return Err(Error::dim("image+audio branch", eps_uncond.len(), eps_img_audio.len()));
    }
    let (cu, ci, cia) = (1.0 - g.r_i, g.r_i - g.r_a, g.r_a);
    let data = eps_uncond
        .data()
        .iter()
        .zip(eps_img.data())
        .zip(eps_img_audio.data())
        .map(|((&u, &i), &ia)| cu * u + ci * i + cia * ia)
        .collect();
    let precision = eps_uncond
        .precision()
        .join(eps_img.precision())
        .join(eps_img_audio.precision());
    Ok(Tensor::new(eps_uncond.dims(), data)?.with_precision(precision))
}
