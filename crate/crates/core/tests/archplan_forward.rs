//! Forward evaluators against nested-loop reference code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saleval::archplan::{
    dense_block_forward, dense_forward, dual_path_forward, residual_forward, Affine, DenseLayer,
    ResidualBranch,
};
use saleval::resample::{Conv2d, FeatureGrid};

type Tensor = Vec<Vec<Vec<f64>>>;

fn to_tensor(g: &FeatureGrid) -> Tensor {
    (0..g.channels())
        .map(|c| {
            (0..g.height())
                .map(|y| (0..g.width()).map(|x| g.get(c, y, x)).collect())
                .collect()
        })
        .collect()
}

fn conv_ref(x: &Tensor, k: &Conv2d) -> Tensor {
    let (h, w) = (x[0].len(), x[0][0].len());
    let r = (k.size / 2) as i64;
    (0..k.out_channels)
        .map(|o| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|xx| {
                            let mut acc = k.bias[o];
                            for (i, plane) in x.iter().enumerate() {
                                for ky in 0..k.size {
                                    for kx in 0..k.size {
                                        let sy = y as i64 + ky as i64 - r;
                                        let sx = xx as i64 + kx as i64 - r;
                                        if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
                                            acc += k.weight(o, i, ky, kx)
                                                * plane[sy as usize][sx as usize];
                                        }
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn affine_ref(x: &Tensor, a: &Affine) -> Tensor {
    x.iter()
        .enumerate()
        .map(|(c, p)| {
            p.iter()
                .map(|row| row.iter().map(|v| v * a.scale[c] + a.shift[c]).collect())
                .collect()
        })
        .collect()
}

fn relu_ref(x: &Tensor) -> Tensor {
    x.iter()
        .map(|p| p.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect())
        .collect()
}

fn assert_close(a: &FeatureGrid, b: &Tensor, tol: f64) {
    let got = to_tensor(a);
    assert_eq!(got.len(), b.len());
    for (pa, pb) in got.iter().zip(b) {
        for (ra, rb) in pa.iter().zip(pb) {
            for (va, vb) in ra.iter().zip(rb) {
                assert!((va - vb).abs() < tol, "{va} vs {vb}");
            }
        }
    }
}

fn random_grid(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureGrid {
    FeatureGrid::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

fn random_affine(rng: &mut ChaCha8Rng, c: usize) -> Affine {
    Affine {
        scale: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        shift: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    }
}

#[test]
fn bottleneck_residual_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let x = random_grid(&mut rng, 4, 6, 5);
        let branch = ResidualBranch::Bottleneck {
            reduce: Conv2d::random(4, 2, 1, &mut rng),
            bn1: random_affine(&mut rng, 2),
            conv: Conv2d::random(2, 2, 3, &mut rng),
            bn2: random_affine(&mut rng, 2),
            expand: Conv2d::random(2, 4, 1, &mut rng),
            bn3: random_affine(&mut rng, 4),
        };
        let ResidualBranch::Bottleneck { reduce, bn1, conv, bn2, expand, bn3 } = &branch else {
            unreachable!()
        };
        let t = to_tensor(&x);
        let h = relu_ref(&affine_ref(&conv_ref(&t, reduce), bn1));
        let h = relu_ref(&affine_ref(&conv_ref(&h, conv), bn2));
        let f = affine_ref(&conv_ref(&h, expand), bn3);
        let expected: Tensor = f
            .iter()
            .zip(&t)
            .map(|(pf, px)| {
                pf.iter()
                    .zip(px)
                    .map(|(rf, rx)| rf.iter().zip(rx).map(|(a, b)| a + b).collect())
                    .collect()
            })
            .collect();
        assert_close(&residual_forward(&x, &branch).unwrap(), &expected, 1e-9);
    }
}

#[test]
fn basic_residual_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let x = random_grid(&mut rng, 3, 5, 5);
        let conv1 = Conv2d::random(3, 3, 3, &mut rng);
        let bn1 = random_affine(&mut rng, 3);
        let conv2 = Conv2d::random(3, 3, 3, &mut rng);
        let bn2 = random_affine(&mut rng, 3);
        let t = to_tensor(&x);
        let h = relu_ref(&affine_ref(&conv_ref(&relu_ref(&t), &conv1), &bn1));
        let f = affine_ref(&conv_ref(&h, &conv2), &bn2);
        let branch = ResidualBranch::Basic { conv1, bn1, conv2, bn2 };
        let out = residual_forward(&x, &branch).unwrap();
        let expected: Tensor = f
            .iter()
            .zip(&t)
            .map(|(pf, px)| {
                pf.iter()
                    .zip(px)
                    .map(|(rf, rx)| rf.iter().zip(rx).map(|(a, b)| a + b).collect())
                    .collect()
            })
            .collect();
        assert_close(&out, &expected, 1e-9);
    }
}

#[test]
fn residual_of_zero_input_is_branch_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = FeatureGrid::zeros(2, 4, 4).unwrap();
    let conv1 = Conv2d::random(2, 2, 3, &mut rng);
    let conv2 = Conv2d::random(2, 2, 3, &mut rng);
    let branch = ResidualBranch::Basic {
        conv1,
        bn1: random_affine(&mut rng, 2),
        conv2,
        bn2: random_affine(&mut rng, 2),
    };
    assert_eq!(residual_forward(&x, &branch).unwrap(), branch.apply(&x).unwrap());
}

fn random_dense_layer(rng: &mut ChaCha8Rng, in_c: usize, k: usize) -> DenseLayer {
    DenseLayer {
        bn1: random_affine(rng, in_c),
        bottleneck: Conv2d::random(in_c, 4 * k, 1, rng),
        bn2: random_affine(rng, 4 * k),
        conv: Conv2d::random(4 * k, k, 3, rng),
    }
}

#[test]
fn dense_layer_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let a = random_grid(&mut rng, 3, 4, 4);
        let b = random_grid(&mut rng, 2, 4, 4);
        let layer = random_dense_layer(&mut rng, 5, 2);
        let mut t = to_tensor(&a);
        t.extend(to_tensor(&b));
        let h = conv_ref(&relu_ref(&affine_ref(&t, &layer.bn1)), &layer.bottleneck);
        let expected = conv_ref(&relu_ref(&affine_ref(&h, &layer.bn2)), &layer.conv);
        let out = dense_forward(&[a, b], &layer).unwrap();
        assert_eq!(out.channels(), 2);
        assert_close(&out, &expected, 1e-9);
    }
}

#[test]
fn dense_block_width_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h0, k) = (4, 2);
    let x0 = random_grid(&mut rng, h0, 3, 3);
    let layers: Vec<DenseLayer> = (0..4)
        .map(|l| random_dense_layer(&mut rng, h0 + l * k, k))
        .collect();
    for l in 0..=layers.len() {
        let out = dense_block_forward(&x0, &layers[..l]).unwrap();
        assert_eq!(out.channels(), h0 + l * k);
    }
    // the second layer sees x0 and the first layer's output
    let y1 = dense_forward(std::slice::from_ref(&x0), &layers[0]).unwrap();
    let y2 = dense_forward(&[x0.clone(), y1.clone()], &layers[1]).unwrap();
    let block = dense_block_forward(&x0, &layers[..2]).unwrap();
    assert_eq!(block.slice_channels(h0 + k, h0 + 2 * k).unwrap(), y2);
}

#[test]
fn dual_path_matches_direct_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let (r, d, k) = (4, 6, 2);
        let res = random_grid(&mut rng, r, 3, 3);
        let dense = random_grid(&mut rng, d, 3, 3);
        let out = random_grid(&mut rng, r + k, 3, 3);
        let (res2, dense2) = dual_path_forward(&res, &dense, &out, k).unwrap();
        assert_eq!((res2.channels(), dense2.channels()), (4, 8));
        for c in 0..r {
            for y in 0..3 {
                for x in 0..3 {
                    assert_eq!(res2.get(c, y, x), res.get(c, y, x) + out.get(c, y, x));
                }
            }
        }
        for c in 0..d + k {
            for y in 0..3 {
                for x in 0..3 {
                    let want = if c < d { dense.get(c, y, x) } else { out.get(r + c - d, y, x) };
                    assert_eq!(dense2.get(c, y, x), want);
                }
            }
        }
    }
}
