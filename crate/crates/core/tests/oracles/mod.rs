//! Brute-force reference implementations shared by the integration tests
//! and the acceptance suite. They favour obviousness over speed.
#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use saleval::emd::TransportProblem;
use saleval::resample::{ConvTranspose2d, FeatureGrid};
use saleval::SeededRng;

pub const KL_EPS: f64 = 2.2204e-16;

/// Trapezoidal ROC area, counting `>= t` for every distinct threshold by
/// scanning the full score lists.
pub fn roc_area(pos: &[f64], neg: &[f64], thresholds: &[f64]) -> f64 {
    let mut ts = thresholds.to_vec();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in ts {
        let tp = pos.iter().filter(|&&v| v >= t).count() as f64 / pos.len() as f64;
        let fp = neg.iter().filter(|&&v| v >= t).count() as f64 / neg.len() as f64;
        pts.push((fp, tp));
    }
    pts.push((1.0, 1.0));
    let mut area = 0.0;
    for i in 1..pts.len() {
        area += (pts[i].0 - pts[i - 1].0) * (pts[i].1 + pts[i - 1].1) / 2.0;
    }
    area
}

/// `values` is row-major with `width` columns; `fix` holds (x, y) pixels.
pub fn judd(values: &[f64], width: usize, fix: &[(usize, usize)]) -> f64 {
    let pos: Vec<f64> = fix.iter().map(|&(x, y)| values[y * width + x]).collect();
    let neg: Vec<f64> = (0..values.len())
        .filter(|i| !fix.iter().any(|&(x, y)| y * width + x == *i))
        .map(|i| values[i])
        .collect();
    roc_area(&pos, &neg, &pos)
}

/// Replays the documented negative schedule: one ChaCha stream per
/// (seed, image, purpose), `|fix|` uniform draws per split.
pub fn borji(values: &[f64], width: usize, fix: &[(usize, usize)], seed: u64, image: &str, splits: usize) -> f64 {
    let pos: Vec<f64> = fix.iter().map(|&(x, y)| values[y * width + x]).collect();
    let mut rng = SeededRng::new(seed).stream(image, "AUC-Borji");
    let mut total = 0.0;
    for _ in 0..splits {
        let neg: Vec<f64> = (0..pos.len()).map(|_| values[rng.gen_range(0..values.len())]).collect();
        let mut ts = pos.clone();
        ts.extend_from_slice(&neg);
        total += roc_area(&pos, &neg, &ts);
    }
    total / splits as f64
}

pub fn sauc(
    values: &[f64],
    width: usize,
    height: usize,
    fix: &[(usize, usize)],
    others: &[(usize, usize)],
    seed: u64,
    image: &str,
    splits: usize,
) -> f64 {
    let pos: Vec<f64> = fix.iter().map(|&(x, y)| values[y * width + x]).collect();
    let pool: Vec<f64> = others
        .iter()
        .map(|&(x, y)| values[y.min(height - 1) * width + x.min(width - 1)])
        .collect();
    let mut rng = SeededRng::new(seed).stream(image, "sAUC");
    let mut total = 0.0;
    for _ in 0..splits {
        let neg: Vec<f64> = (0..pos.len()).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
        let mut ts = pos.clone();
        ts.extend_from_slice(&neg);
        total += roc_area(&pos, &neg, &ts);
    }
    total / splits as f64
}

pub fn nss(values: &[f64], width: usize, fix: &[(usize, usize)]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    fix.iter().map(|&(x, y)| (values[y * width + x] - mean) / std).sum::<f64>() / fix.len() as f64
}

/// Raw-moment form of the correlation coefficient.
pub fn cc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

fn to_distribution(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn sim(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (to_distribution(a), to_distribution(b));
    a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum()
}

pub fn kl(gt: &[f64], sal: &[f64]) -> f64 {
    let (g, s) = (to_distribution(gt), to_distribution(sal));
    g.iter()
        .zip(&s)
        .map(|(p, q)| p * (p / (q + KL_EPS) + KL_EPS).ln())
        .sum()
}

/// Transportation LP solved by a general-purpose simplex. One demand row is
/// implied by the others and left out.
pub fn transport_lp(p: &TransportProblem) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut rows = vec![Vec::new(); p.supplies.len()];
    let mut cols = vec![Vec::new(); p.demands.len()];
    for (i, s) in p.supplies.iter().enumerate() {
        for (j, d) in p.demands.iter().enumerate() {
            let v = lp.add_var(s.0.distance(d.0), (0.0, f64::INFINITY));
            rows[i].push((v, 1.0));
            cols[j].push((v, 1.0));
        }
    }
    for (i, r) in rows.into_iter().enumerate() {
        lp.add_constraint(r, ComparisonOp::Eq, p.supplies[i].1);
    }
    let last = cols.len() - 1;
    for (j, c) in cols.into_iter().enumerate() {
        if j != last {
            lp.add_constraint(c, ComparisonOp::Eq, p.demands[j].1);
        }
    }
    lp.solve().expect("LP oracle failed").objective()
}

/// Transposed convolution the textbook way: insert `stride - 1` zeros between
/// samples, pad by `size - 1 - pad`, then correlate with the flipped kernel.
pub fn zero_stuffed_deconv(g: &FeatureGrid, k: &ConvTranspose2d, stride: usize, pad: usize) -> Vec<f64> {
    let (h, w, s) = (g.height(), g.width(), k.size);
    let border = s - 1 - pad;
    let zh = (h - 1) * stride + 1 + 2 * border;
    let zw = (w - 1) * stride + 1 + 2 * border;
    let mut z = vec![0.0; g.channels() * zh * zw];
    for c in 0..g.channels() {
        for y in 0..h {
            for x in 0..w {
                z[(c * zh + border + y * stride) * zw + border + x * stride] = g.get(c, y, x);
            }
        }
    }
    let (oh, ow) = (zh - s + 1, zw - s + 1);
    let mut out = Vec::with_capacity(k.out_channels * oh * ow);
    for o in 0..k.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = k.bias[o];
                for i in 0..g.channels() {
                    for ky in 0..s {
                        for kx in 0..s {
                            acc += z[(i * zh + oy + ky) * zw + ox + kx]
                                * k.weight(i, o, s - 1 - ky, s - 1 - kx);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Textbook Pearson r from raw sums.
pub fn pearson_r(pts: &[(f64, f64)]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    cc(&xs, &ys)
}
