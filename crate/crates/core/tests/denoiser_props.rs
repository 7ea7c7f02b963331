mod common;

use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftfuse::conditioning::FaceMask;
use shiftfuse::denoiser::{
    denoise_clip, guided_predict, spatial_audio_attend, ClipCondition, GuidanceConfig, LatentClip, NoiseSchedule,
};
use shiftfuse::numerics::{AttentionWeights, Precision, Tensor};

use common::{coupled, setup};

fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(-2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn guidance_scales_with_its_branches(seed in 0u64..10_000, lambda in -3.0f64..3.0, r_i in 0.0f64..10.0, r_a in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, i, ia) = (random(&[3, 4], &mut rng), random(&[3, 4], &mut rng), random(&[3, 4], &mut rng));
        let g = GuidanceConfig::new(r_i, r_a).unwrap();
        let base = guided_predict(&u, &i, &ia, &g).unwrap();
        let scaled = guided_predict(&u.scale(lambda), &i.scale(lambda), &ia.scale(lambda), &g).unwrap();
        let tol = 1e-12 * (1.0 + r_i + r_a) * 4.0;
        prop_assert!(scaled.max_abs_diff(&base.scale(lambda)) < tol);
    }

    #[test]
    fn guidance_is_affine_in_each_branch(seed in 0u64..10_000, s in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, i, ia, d) = (random(&[5], &mut rng), random(&[5], &mut rng), random(&[5], &mut rng), random(&[5], &mut rng));
        let g = GuidanceConfig::default();
        // f(ia + s·d) − f(ia) is linear in s with slope f's coefficient r_a.
        let moved = guided_predict(&u, &i, &ia.add(&d.scale(s)).unwrap(), &g).unwrap();
        let base = guided_predict(&u, &i, &ia, &g).unwrap();
        let expect = d.scale(s * g.r_a);
        prop_assert!(moved.sub(&base).unwrap().max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn zero_mask_leaves_spatial_latents_untouched(seed in 0u64..10_000, h in 1usize..4, w in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = AttentionWeights::random(3, 3, 2, &mut rng);
        let z = random(&[h * w, 3], &mut rng);
        let audio = random(&[2, 3], &mut rng);
        let out = spatial_audio_attend(&z, &audio, &FaceMask::zeros(h, w), &weights).unwrap();
        prop_assert!(out == z);
    }
}

#[test]
fn denoise_clip_keeps_offset_and_shape() {
    let (cfg, prep) = setup(8, [2, 2, 1], 0, Precision::F64);
    let backbone = coupled(&cfg, &prep);
    let schedule = NoiseSchedule::cosine(3).unwrap();
    let idx: Vec<usize> = (0..8).collect();
    let clip = LatentClip::new(prep.noise.gather(&idx).unwrap(), 16).unwrap();
    let cond = ClipCondition {
        audio: &prep.audio,
        reference: &prep.data.reference,
        buckets: prep.buckets,
        mask: &prep.mask,
        context: None,
    };
    let out = denoise_clip(&clip, &cond, &backbone, &schedule, 3, &GuidanceConfig::default(), None).unwrap();
    assert_eq!(out.frame_offset, 16);
    assert_eq!(out.frames.dims(), clip.frames.dims());
    assert!(denoise_clip(&clip, &cond, &backbone, &schedule, 4, &GuidanceConfig::default(), None).is_err());
}
