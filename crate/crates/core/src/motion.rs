//! Motion buckets: integer head-translation and expression amplitudes in
//! `[0, 128]`, their embedding, and prediction from audio + reference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{FaceBox, PooledAudioEmbedding, ReferenceEmbedding};
use crate::error::{Error, Result};
use crate::numerics::{sinusoidal_encode, Linear, Params, Tensor};

pub const BUCKET_MAX: u32 = 128;
pub const DEFAULT_CALIBRATION: f64 = 4096.0;
pub const DEFAULT_PE_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionBuckets {
    /// Translation bucket.
    pub m_t: u32,
    /// Expression bucket.
    pub m_e: u32,
    pub beta: f64,
}

impl MotionBuckets {
    pub fn new(m_t: u32, m_e: u32, beta: f64) -> Result<Self> {
        let b = Self { m_t, m_e, beta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("m_t", self.m_t), ("m_e", self.m_e)] {
            if v > BUCKET_MAX {
                return Err(Error::Range {
                    what: what.into(),
                    value: v as f64,
                    min: 0.0,
                    max: BUCKET_MAX as f64,
                });
            }
        }
        check_beta(self.beta)
    }
}

impl Default for MotionBuckets {
    fn default() -> Self {
        Self {
            m_t: 16,
            m_e: 16,
            beta: DynamicScale::Moderate.beta(),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Range {
            what: "beta".into(),
            value: beta,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    Ok(())
}

/// User-facing presets for the dynamic scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicScale {
    Mild,
    Moderate,
    Intense,
}

impl DynamicScale {
    pub fn beta(self) -> f64 {
        match self {
            DynamicScale::Mild => 0.5,
            DynamicScale::Moderate => 1.0,
            DynamicScale::Intense => 2.0,
        }
    }
}

fn to_bucket(k: f64, var: f64) -> u32 {
    (k * var).clamp(0.0, BUCKET_MAX as f64).round() as u32
}

/// Population variance.
fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Which box statistic feeds the translation bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxStatistic {
    #[default]
    Centers,
    Corners,
    Sizes,
}

/// Translation bucket from per-frame face boxes.
///
/// Coordinates are divided by the mean box diagonal, the per-coordinate
/// temporal variances are averaged, and `k_t · var` is clamped to
/// `[0, 128]` and rounded.
pub fn bucket_from_boxes(boxes: &[FaceBox], k_t: f64, stat: BoxStatistic) -> Result<u32> {
    if boxes.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: boxes.len(),
        });
    }
    for b in boxes {
        b.validate()?;
    }
    let diag = boxes.iter().map(FaceBox::diagonal).sum::<f64>() / boxes.len() as f64;
    if !(diag > 0.0) {
        return Err(Error::Input("boxes have zero mean diagonal".into()));
    }
    let coords: Vec<Vec<f64>> = boxes
        .iter()
        .map(|b| {
            let raw = match stat {
                BoxStatistic::Centers => {
                    let (cx, cy) = b.center();
                    vec![cx, cy]
                }
                BoxStatistic::Corners => vec![b.x0, b.y0, b.x1, b.y1],
                BoxStatistic::Sizes => vec![b.x1 - b.x0, b.y1 - b.y0],
            };
            raw.into_iter().map(|v| v / diag).collect()
        })
        .collect();
    let n_coords = coords[0].len();
    let var = (0..n_coords)
        .map(|c| variance(coords.iter().map(move |row| row[c])))
        .sum::<f64>()
        / n_coords as f64;
    Ok(to_bucket(k_t, var))
}

/// Expression bucket from per-frame landmark sets, using centroid-relative
/// coordinates so head translation does not register as expression.
pub fn bucket_from_landmarks(landmarks: &[Vec<[f64; 2]>], k_e: f64) -> Result<u32> {
    if landmarks.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: landmarks.len(),
        });
    }
    let n_points = landmarks[0].len();
    if n_points == 0 {
        return Err(Error::Input("landmark frames have no points".into()));
    }
    for (i, frame) in landmarks.iter().enumerate() {
        if frame.len() != n_points {
            return Err(Error::Input(format!(
                "frame {i} has {} landmarks, expected {n_points}",
                frame.len()
            )));
        }
    }
    let relative: Vec<Vec<[f64; 2]>> = landmarks
        .iter()
        .map(|frame| {
            let cx = frame.iter().map(|p| p[0]).sum::<f64>() / n_points as f64;
            let cy = frame.iter().map(|p| p[1]).sum::<f64>() / n_points as f64;
            frame.iter().map(|p| [p[0] - cx, p[1] - cy]).collect()
        })
        .collect();
    let mut total = 0.0;
    for p in 0..n_points {
        for axis in 0..2 {
            total += variance(relative.iter().map(move |f| f[p][axis]));
        }
    }
    Ok(to_bucket(k_e, total / (2 * n_points) as f64))
}

/// `[Pe(m_t), Pe(m_e)]`, the input of the bucket projection.
pub fn bucket_features(b: &MotionBuckets, dim_pe: usize) -> Result<Tensor> {
    b.validate()?;
    let t = sinusoidal_encode(b.m_t as u64, dim_pe)?;
    let e = sinusoidal_encode(b.m_e as u64, dim_pe)?;
    let mut data = t.into_data();
    data.extend(e.into_data());
    Ok(Tensor::vector(data))
}

/// `W · [Pe(m_t), Pe(m_e)]`.
pub fn embed_buckets(b: &MotionBuckets, dim_pe: usize, w: &Linear) -> Result<Tensor> {
    if w.input_dim() != 2 * dim_pe {
        return Err(Error::dim("bucket projection input", 2 * dim_pe, w.input_dim()));
    }
    w.forward(&bucket_features(b, dim_pe)?)
}

/// Three linear layers with ReLU between them, mapping pooled audio plus the
/// reference embedding to two raw bucket logits.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPredictor {
    pub layers: [Linear; 3],
}

impl BucketPredictor {
    pub fn random(audio_width: usize, ref_width: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: [
                Linear::random(audio_width + ref_width, hidden, true, rng),
                Linear::random(hidden, hidden, true, rng),
                Linear::random(hidden, 2, true, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    /// Head output squashed into `[0, 128]` by a scaled logistic.
    pub fn raw_buckets(&self, audio: &PooledAudioEmbedding, reference: &ReferenceEmbedding) -> Result<(f64, f64)> {
        let mut x = audio.summary().into_data();
        x.extend_from_slice(reference.vector.data());
        if x.len() != self.input_dim() {
            return Err(Error::dim("bucket predictor input", self.input_dim(), x.len()));
        }
        let relu = |t: Tensor| t.map(|v| v.max(0.0));
        let h = relu(self.layers[0].forward(&Tensor::vector(x))?);
        let h = relu(self.layers[1].forward(&h)?);
        let out = self.layers[2].forward(&h)?;
        let squash = |v: f64| BUCKET_MAX as f64 / (1.0 + (-v).exp());
        Ok((squash(out.data()[0]), squash(out.data()[1])))
    }
}

impl Params for BucketPredictor {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

/// `β · raw`, clamped to `[0, 128]` and rounded.
pub fn scale_buckets(raw: (f64, f64), beta: f64) -> Result<MotionBuckets> {
    check_beta(beta)?;
    let scale = |v: f64| (beta * v).clamp(0.0, BUCKET_MAX as f64).round() as u32;
    Ok(MotionBuckets {
        m_t: scale(raw.0),
        m_e: scale(raw.1),
        beta,
    })
}

pub fn predict_buckets(
    audio: &PooledAudioEmbedding,
    reference: &ReferenceEmbedding,
    predictor: &BucketPredictor,
    beta: f64,
) -> Result<MotionBuckets> {
    let raw = predictor.raw_buckets(audio, reference)?;
    scale_buckets(raw, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn centered_box(cx: f64, cy: f64, diag: f64) -> FaceBox {
        let half = diag / 2.0 / 2f64.sqrt();
        FaceBox::new(cx - half, cy - half, cx + half, cy + half).unwrap()
    }

    /// Independent two-pass variance.
    fn brute_variance(xs: &[f64]) -> f64 {
        let mut sum = 0.0;
        for x in xs {
            sum += x;
        }
        let mean = sum / xs.len() as f64;
        let mut acc = 0.0;
        for x in xs {
            acc += (x - mean).powi(2);
        }
        acc / xs.len() as f64
    }

    #[test]
    fn static_boxes_give_zero() {
        let b = centered_box(0.5, 0.5, 0.4);
        assert_eq!(bucket_from_boxes(&[b; 6], 4096.0, BoxStatistic::Centers).unwrap(), 0);
    }

    #[test]
    fn alternating_centers_give_ten() {
        let boxes: Vec<FaceBox> = (0..10)
            .map(|i| {
                let d = if i % 2 == 0 { 0.05 } else { -0.05 };
                centered_box(0.5 + d, 0.5 + d, 1.0)
            })
            .collect();
        let xs: Vec<f64> = boxes.iter().map(|b| b.center().0).collect();
        assert!((brute_variance(&xs) - 0.0025).abs() < 1e-12);
        assert_eq!(bucket_from_boxes(&boxes, 4096.0, BoxStatistic::Centers).unwrap(), 10);
    }

    #[test]
    fn large_variance_clamps_to_128() {
        let boxes = [centered_box(0.2, 0.2, 0.1), centered_box(0.8, 0.8, 0.1)];
        assert_eq!(bucket_from_boxes(&boxes, 4096.0, BoxStatistic::Centers).unwrap(), 128);
    }

    #[test]
    fn single_frame_is_insufficient() {
        let b = centered_box(0.5, 0.5, 0.2);
        assert!(matches!(
            bucket_from_boxes(&[b], 1.0, BoxStatistic::Centers),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn rigid_translation_gives_zero_expression() {
        let base = [[0.3, 0.3], [0.5, 0.4], [0.4, 0.6]];
        let frames: Vec<Vec<[f64; 2]>> = (0..5)
            .map(|i| {
                let d = 0.03 * i as f64;
                base.iter().map(|p| [p[0] + d, p[1] - d]).collect()
            })
            .collect();
        assert_eq!(bucket_from_landmarks(&frames, 4096.0).unwrap(), 0);
    }

    #[test]
    fn two_frame_two_point_matches_brute_force() {
        // point 0 moves +0.1 on both axes, point 1 stays
        let frames = vec![
            vec![[0.4, 0.4], [0.6, 0.6]],
            vec![[0.5, 0.5], [0.6, 0.6]],
        ];
        let mut vars = Vec::new();
        for p in 0..2 {
            for a in 0..2 {
                let rel: Vec<f64> = frames
                    .iter()
                    .map(|f| f[p][a] - (f[0][a] + f[1][a]) / 2.0)
                    .collect();
                vars.push(brute_variance(&rel));
            }
        }
        let var = vars.iter().sum::<f64>() / 4.0;
        let expected = (4096.0 * var).clamp(0.0, 128.0).round() as u32;
        assert_eq!(bucket_from_landmarks(&frames, 4096.0).unwrap(), expected);
        // each relative coordinate moves by 0.05: var = 0.025^2, 4096 * 0.000625 = 2.56
        assert_eq!(expected, 3);
    }

    #[test]
    fn mismatched_point_counts_rejected() {
        let frames = vec![vec![[0.0, 0.0]], vec![[0.0, 0.0], [1.0, 1.0]]];
        assert!(matches!(bucket_from_landmarks(&frames, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn zero_projection_disables_controller() {
        let w = Linear::zeros(2 * 16, 8, false);
        let e = embed_buckets(&MotionBuckets::new(40, 90, 1.0).unwrap(), 16, &w).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_buckets_project_sin0_cos1_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Linear::random(32, 4, false, &mut rng);
        let e = embed_buckets(&MotionBuckets::new(0, 0, 1.0).unwrap(), 16, &w).unwrap();
        let pattern = Tensor::from_fn(&[32], |i| (i % 2) as f64);
        assert_eq!(e, w.forward(&pattern).unwrap());
    }

    #[test]
    fn out_of_range_bucket_rejected() {
        let w = Linear::zeros(32, 4, false);
        let b = MotionBuckets {
            m_t: 129,
            m_e: 0,
            beta: 1.0,
        };
        assert!(matches!(embed_buckets(&b, 16, &w), Err(Error::Range { .. })));
    }

    #[test]
    fn sampled_bucket_pairs_embed_distinctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Linear::random(2 * DEFAULT_PE_DIM, 16, false, &mut rng);
        let mut pairs = Vec::new();
        while pairs.len() < 50 {
            let p = (rng.random_range(0..=128u32), rng.random_range(0..=128u32));
            if !pairs.contains(&p) {
                pairs.push(p);
            }
        }
        let embs: Vec<Tensor> = pairs
            .iter()
            .map(|&(t, e)| {
                embed_buckets(&MotionBuckets::new(t, e, 1.0).unwrap(), DEFAULT_PE_DIM, &w).unwrap()
            })
            .collect();
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                assert!(embs[i].max_abs_diff(&embs[j]) > 1e-9, "{:?} vs {:?}", pairs[i], pairs[j]);
            }
        }
    }

    #[test]
    fn beta_scaling_examples() {
        let b = scale_buckets((10.0, 20.0), 2.0).unwrap();
        assert_eq!((b.m_t, b.m_e), (20, 40));
        let b = scale_buckets((10.0, 20.0), DynamicScale::Mild.beta()).unwrap();
        assert_eq!((b.m_t, b.m_e), (5, 10));
        let b = scale_buckets((100.0, 3.0), 100.0).unwrap();
        assert_eq!((b.m_t, b.m_e), (128, 128));
        assert!(scale_buckets((1.0, 1.0), 0.0).is_err());
    }
}
