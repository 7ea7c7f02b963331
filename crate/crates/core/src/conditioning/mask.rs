use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Axis-aligned rectangle in normalized `[0, 1]²` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl FaceBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn full() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("x0", self.x0), ("y0", self.y0), ("x1", self.x1), ("y1", self.y1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range {
                    what: format!("box {what}"),
                    value: v,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(Error::Input(format!("inverted box {self:?}")));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn union(&self, other: &FaceBox) -> FaceBox {
        FaceBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

/// Binary `[h × w]` mask shared by every frame of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMask {
    pub mask: Tensor,
}

impl FaceMask {
    pub fn ones(h: usize, w: usize) -> Self {
        Self {
            mask: Tensor::filled(&[h, w], 1.0),
        }
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            mask: Tensor::zeros(&[h, w]),
        }
    }

    pub fn cells(&self) -> usize {
        self.mask.len()
    }

    pub fn union(&self, other: &FaceMask) -> Result<FaceMask> {
        if self.mask.dims() != other.mask.dims() {
            return Err(Error::dim("mask cells", self.cells(), other.cells()));
        }
        let data = self
            .mask
            .data()
            .iter()
            .zip(other.mask.data())
            .map(|(a, b)| a.max(*b))
            .collect();
        Ok(FaceMask {
            mask: Tensor::new(self.mask.dims(), data)?,
        })
    }
}

/// Rasterizes the joint bounding box of all per-frame boxes onto an `h × w`
/// grid. A cell is set when it intersects the joint box; a zero-area box
/// still marks the cell that contains it. No boxes means no restriction.
pub fn build_face_mask(boxes: &[FaceBox], h: usize, w: usize) -> Result<FaceMask> {
    if h == 0 || w == 0 {
        return Err(Error::config("mask grid must be non-empty"));
    }
    let Some(first) = boxes.first() else {
        return Ok(FaceMask::ones(h, w));
    };
    for b in boxes {
        b.validate()?;
    }
    let joint = boxes.iter().skip(1).fold(*first, |acc, b| acc.union(b));
    let span = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        let a = ((lo * n as f64).floor() as usize).min(n - 1);
        let b = ((hi * n as f64).ceil() as usize).saturating_sub(1).min(n - 1).max(a);
        (a, b)
    };
    let (c0, c1) = span(joint.x0, joint.x1, w);
    let (r0, r1) = span(joint.y0, joint.y1, h);
    let mask = Tensor::from_fn(&[h, w], |i| {
        let (r, c) = (i / w, i % w);
        if (r0..=r1).contains(&r) && (c0..=c1).contains(&c) {
            1.0
        } else {
            0.0
        }
    });
    Ok(FaceMask { mask })
}
