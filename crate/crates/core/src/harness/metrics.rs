use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub boundaries: Vec<usize>,
    /// `‖x_b − x_{b−1}‖` for each boundary `b`.
    pub boundary_values: Vec<f64>,
    pub mean_boundary: f64,
    /// Mean over all adjacent pairs not straddling a boundary.
    pub mean_within: f64,
    pub seam_ratio: f64,
    /// `1 − mean‖Δx‖ / (2·rms‖x − x̄‖)`, in `[0, 1]`.
    pub smoothness_proxy: f64,
}

/// Internal clip boundaries `f, 2f, … < l`.
pub fn clip_boundaries(l: usize, f: usize) -> Vec<usize> {
    if f == 0 {
        return Vec::new();
    }
    (1..).map(|k| k * f).take_while(|&b| b < l).collect()
}

/// Compares frame differences across `boundaries` with those inside clips.
///
/// A boundary `b` separates frames `b − 1` and `b`.
pub fn seam_metric(z: &Tensor, boundaries: &[usize]) -> Result<SeamReport> {
    if z.rank() < 1 || z.dim(0) < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: if z.rank() < 1 { 0 } else { z.dim(0) },
        });
    }
    let l = z.dim(0);
    let mut is_boundary = vec![false; l];
    for &b in boundaries {
        if b == 0 || b >= l {
            return Err(Error::Range {
                what: "seam boundary".into(),
                value: b as f64,
                min: 1.0,
                max: (l - 1) as f64,
            });
        }
        is_boundary[b] = true;
    }
    let diff = |i: usize| -> f64 {
        z.slab(i)
            .iter()
            .zip(z.slab(i - 1))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let diffs: Vec<f64> = (1..l).map(diff).collect();
    let boundary_values: Vec<f64> = boundaries.iter().map(|&b| diffs[b - 1]).collect();
    let within: Vec<f64> = (1..l).filter(|&i| !is_boundary[i]).map(|i| diffs[i - 1]).collect();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let mean_boundary = mean(&boundary_values);
    let mean_within = mean(&within);
    let seam_ratio = if boundaries.is_empty() || (mean_boundary == 0.0 && mean_within == 0.0) {
        1.0
    } else if mean_within == 0.0 {
        f64::INFINITY
    } else {
        mean_boundary / mean_within
    };

    let per = z.len() / l;
    let mut centre = vec![0.0; per];
    for i in 0..l {
        centre.iter_mut().zip(z.slab(i)).for_each(|(c, v)| *c += v / l as f64);
    }
    let spread = ((0..l)
        .map(|i| {
            z.slab(i)
                .iter()
                .zip(&centre)
                .map(|(v, c)| (v - c).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / l as f64)
        .sqrt();
    let smoothness_proxy = if spread == 0.0 {
        1.0
    } else {
        (1.0 - mean(&diffs) / (2.0 * spread)).max(0.0)
    };
    Ok(SeamReport {
        boundaries: boundaries.to_vec(),
        boundary_values,
        mean_boundary,
        mean_within,
        seam_ratio,
        smoothness_proxy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn constant_sequence_has_no_discontinuity() {
        let z = Tensor::filled(&[12, 3], 2.5);
        let r = seam_metric(&z, &[4, 8]).unwrap();
        assert_eq!(r.boundary_values, vec![0.0, 0.0]);
        assert_eq!(r.mean_within, 0.0);
        assert_eq!(r.seam_ratio, 1.0);
        assert_eq!(r.smoothness_proxy, 1.0);
    }

    #[test]
    fn ramp_has_unit_ratio() {
        let z = Tensor::from_fn(&[16, 2], |i| (i / 2) as f64 * 0.5);
        let r = seam_metric(&z, &clip_boundaries(16, 4)).unwrap();
        assert!((r.seam_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_at_boundary_raises_ratio() {
        let z = Tensor::from_fn(&[8, 1], |i| i as f64 + if i >= 4 { 10.0 } else { 0.0 });
        let r = seam_metric(&z, &[4]).unwrap();
        assert_eq!(r.boundary_values, vec![11.0]);
        assert_eq!(r.mean_within, 1.0);
        assert_eq!(r.seam_ratio, 11.0);
    }

    #[test]
    fn empty_boundaries_give_unit_ratio() {
        let z = Tensor::from_fn(&[5, 2], |i| (i as f64).sin());
        assert_eq!(seam_metric(&z, &[]).unwrap().seam_ratio, 1.0);
    }

    #[test]
    fn out_of_range_boundary_rejected() {
        let z = Tensor::zeros(&[5, 2]);
        assert!(seam_metric(&z, &[0]).is_err());
        assert!(seam_metric(&z, &[5]).is_err());
    }

    #[test]
    fn boundaries_are_clip_multiples() {
        assert_eq!(clip_boundaries(40, 8), vec![8, 16, 24, 32]);
        assert_eq!(clip_boundaries(20, 8), vec![8, 16]);
        assert!(clip_boundaries(8, 8).is_empty());
    }

    proptest! {
        #[test]
        fn invariant_under_global_offset(seed in 0u64..1000, shift in -50.0f64..50.0) {
            let z = Tensor::from_fn(&[12, 3], |i| ((i as u64 * 7919 + seed) % 97) as f64 / 13.0);
            let moved = z.map(|v| v + shift);
            let a = seam_metric(&z, &[4, 8]).unwrap();
            let b = seam_metric(&moved, &[4, 8]).unwrap();
            prop_assert!((a.seam_ratio - b.seam_ratio).abs() < 1e-9);
            prop_assert!((a.smoothness_proxy - b.smoothness_proxy).abs() < 1e-9);
            prop_assert!(a.smoothness_proxy >= 0.0 && a.smoothness_proxy <= 1.0);
        }
    }
}
