use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saleval::resample::{
    bilinear_resize, readout, subpixel_shuffle, subpixel_unshuffle, transposed_conv2d,
    transposed_conv2d_with, ConvTranspose2d, FeatureGrid, ReadoutSpec, ReadoutWeights,
    UpsampleKind,
};

mod oracles;
use oracles::zero_stuffed_deconv;

fn random_grid(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureGrid {
    FeatureGrid::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

#[test]
fn deconv_matches_zero_stuffing() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let g = random_grid(&mut rng, 3, 5, 5);
        let k = ConvTranspose2d::random(3, 2, &mut rng);
        let out = transposed_conv2d(&g, &k).unwrap();
        assert_eq!((out.height(), out.width()), (10, 10));
        let oracle = zero_stuffed_deconv(&g, &k, 2, 1);
        assert_eq!(out.data().len(), oracle.len());
        for (a, b) in out.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
    // other stride/pad combinations share the same oracle
    for (stride, pad) in [(1, 0), (2, 0), (3, 2), (1, 1)] {
        let g = random_grid(&mut rng, 2, 4, 3);
        let k = ConvTranspose2d::random(2, 3, &mut rng);
        let out = transposed_conv2d_with(&g, &k, stride, pad).unwrap();
        let oracle = zero_stuffed_deconv(&g, &k, stride, pad);
        for (a, b) in out.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn readout_size_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_grid(&mut rng, 64, 3, 5);
    let none = ReadoutSpec::projection_only();
    let w = ReadoutWeights::random(&none, 64, &mut rng).unwrap();
    let out = readout(&g, &none, &w).unwrap();
    assert_eq!((out.channels(), out.height(), out.width()), (1, 3, 5));
    for kind in UpsampleKind::UPSAMPLING {
        for n in 1..=3 {
            let spec = ReadoutSpec::new(kind, n).unwrap();
            let w = ReadoutWeights::random(&spec, 64, &mut rng).unwrap();
            let out = readout(&g, &spec, &w).unwrap();
            assert_eq!(out.channels(), 1);
            assert_eq!((out.height(), out.width()), (3 << n, 5 << n), "{kind:?} N={n}");
        }
    }
}

#[test]
fn readout_layer_widths() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dc = ReadoutSpec::new(UpsampleKind::Dc, 3).unwrap();
    let w = ReadoutWeights::random(&dc, 256, &mut rng).unwrap();
    assert_eq!(w.projection.weights.len(), 32);
    let spc = ReadoutSpec::new(UpsampleKind::Spc, 3).unwrap();
    let w = ReadoutWeights::random(&spc, 256, &mut rng).unwrap();
    assert_eq!(w.projection.weights.len(), 4);
    let bi = ReadoutSpec::new(UpsampleKind::Bi, 2).unwrap();
    let w = ReadoutWeights::random(&bi, 256, &mut rng).unwrap();
    assert_eq!(w.projection.weights.len(), 256);
    assert!(w.layers.is_empty());
    assert!(ReadoutWeights::random(&spc, 36, &mut rng).is_err());
}

#[test]
fn bilinear_readout_equals_upsampling_every_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_grid(&mut rng, 3, 4, 4);
    let spec = ReadoutSpec::new(UpsampleKind::Bi, 2).unwrap();
    let w = ReadoutWeights::random(&spec, 3, &mut rng).unwrap();
    let out = readout(&g, &spec, &w).unwrap();
    let up = bilinear_resize(&bilinear_resize(&g, 8, 8).unwrap(), 16, 16).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            let mut z = w.projection.bias;
            for c in 0..3 {
                z += w.projection.weights[c] * up.get(c, y, x);
            }
            let expected = if z >= 0.0 { z } else { 0.01 * z };
            assert!((out.get(0, y, x) - expected).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn deconv_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_grid(&mut rng, 2, 3, 4);
        let y = random_grid(&mut rng, 2, 3, 4);
        let mut k = ConvTranspose2d::random(2, 2, &mut rng);
        k.bias = vec![0.0; 2];
        let combo = FeatureGrid::new(
            2, 3, 4,
            x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect(),
        ).unwrap();
        let lhs = transposed_conv2d(&combo, &k).unwrap();
        let tx = transposed_conv2d(&x, &k).unwrap();
        let ty = transposed_conv2d(&y, &k).unwrap();
        for ((l, a), b) in lhs.data().iter().zip(tx.data()).zip(ty.data()) {
            prop_assert!((l - (alpha * a + beta * b)).abs() < 1e-9);
        }
    }

    #[test]
    fn shuffle_round_trip(seed in any::<u64>(), groups in 1usize..4, h in 1usize..5, w in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng, 4 * groups, h, w);
        let s = subpixel_shuffle(&g, 2).unwrap();
        prop_assert_eq!((s.channels(), s.height(), s.width()), (groups, 2 * h, 2 * w));
        prop_assert_eq!(subpixel_unshuffle(&s, 2).unwrap(), g);
    }

    #[test]
    fn resize_up_down_keeps_dims(c in 1usize..3, h in 1usize..9, w in 1usize..9) {
        let g = FeatureGrid::zeros(c, h, w).unwrap();
        let up = bilinear_resize(&g, 2 * h, 2 * w).unwrap();
        let down = bilinear_resize(&up, h, w).unwrap();
        prop_assert_eq!((down.channels(), down.height(), down.width()), (c, h, w));
    }
}
