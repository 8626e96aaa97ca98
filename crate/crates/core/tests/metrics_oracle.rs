use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saleval::metrics::{auc_borji, auc_judd, cc, kl, nss, sauc, sim, AucConfig};
use saleval::{DensityMap, Fixation, FixationSet, SeededRng};

mod oracles;

const W: usize = 8;
const H: usize = 8;

struct Case {
    sal: Vec<f64>,
    gt: Vec<f64>,
    fix: Vec<(usize, usize)>,
    others: Vec<(usize, usize)>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    // quantized maps exercise tied thresholds
    let quantized = rng.gen_bool(0.3);
    let value =|rng: &mut ChaCha8Rng| {
        let v: f64 = rng.gen_range(0.0..1.0);
        if quantized {
            (v * 5.0).floor() / 5.0
        } else {
            v
        }
    };
    let mut sal: Vec<f64> = (0..W * H).map(|_| value(rng)).collect();
    sal[rng.gen_range(0..W * H)] += 0.5;
    let gt: Vec<f64> = (0..W * H).map(|_| rng.gen_range(0.01..1.0)).collect();
    let n = rng.gen_range(1..=10);
    let fix = (0..n).map(|_| (rng.gen_range(0..W), rng.gen_range(0..H))).collect();
    let others = (0..rng.gen_range(1..30))
        .map(|_| (rng.gen_range(0..W + 3), rng.gen_range(0..H + 3)))
        .collect();
    Case { sal, gt, fix, others }
}

fn fixation_set(pts: &[(usize, usize)]) -> FixationSet {
    FixationSet::new(
        W,
        H,
        pts.iter().map(|&(x, y)| Fixation { x, y, observer: 0 }).collect(),
    )
    .unwrap()
}

#[test]
fn metrics_match_brute_force_on_random_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let seed = 17;
    for case_index in 0..200 {
        let c = random_case(&mut rng);
        let id = format!("img{case_index}");
        let sal = DensityMap::new(W, H, c.sal.clone()).unwrap();
        let gt = DensityMap::new(W, H, c.gt.clone()).unwrap();
        let fix = fixation_set(&c.fix);
        let others: Vec<Fixation> = c
            .others
            .iter()
            .map(|&(x, y)| Fixation { x, y, observer: 1 })
            .collect();
        let cfg = AucConfig::new(20, SeededRng::new(seed), id.as_str());

        let judd = auc_judd(&sal, &fix).unwrap().value;
        assert_eq!(judd, oracles::judd(&c.sal, W, &c.fix), "case {case_index}");
        let borji = auc_borji(&sal, &fix, &cfg).unwrap().value;
        assert_eq!(borji, oracles::borji(&c.sal, W, &c.fix, seed, &id, 20));
        let s = sauc(&sal, &fix, &others, &cfg).unwrap().value;
        assert_eq!(s, oracles::sauc(&c.sal, W, H, &c.fix, &c.others, seed, &id, 20));

        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(nss(&sal, &fix).unwrap().value, oracles::nss(&c.sal, W, &c.fix)));
        assert!(close(cc(&sal, &gt).unwrap().value, oracles::cc(&c.sal, &c.gt)));
        assert!(close(sim(&sal, &gt).unwrap().value, oracles::sim(&c.sal, &c.gt)));
        assert!(close(kl(&gt, &sal).unwrap().value, oracles::kl(&c.gt, &c.sal)));
    }
}

#[test]
fn sampled_aucs_depend_on_seed_and_image_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = random_case(&mut rng);
    let sal = DensityMap::new(W, H, c.sal.clone()).unwrap();
    let fix = fixation_set(&c.fix);
    let a = AucConfig::new(50, SeededRng::new(1), "x");
    let b = AucConfig::new(50, SeededRng::new(1), "x");
    assert_eq!(auc_borji(&sal, &fix, &a).unwrap(), auc_borji(&sal, &fix, &b).unwrap());
    // a different image id draws different negatives
    let other = AucConfig::new(50, SeededRng::new(1), "y");
    let va = auc_borji(&sal, &fix, &a).unwrap().value;
    let vb = auc_borji(&sal, &fix, &other).unwrap().value;
    assert_eq!(vb, oracles::borji(&c.sal, W, &c.fix, 1, "y", 50));
    assert_eq!(va, oracles::borji(&c.sal, W, &c.fix, 1, "x", 50));
}

fn arb_map() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, W * H)
}

proptest! {
    #[test]
    fn scores_stay_in_range(values in arb_map(), gt in arb_map(), fx in 0..W, fy in 0..H) {
        prop_assume!(values.iter().sum::<f64>() > 1e-6 && gt.iter().sum::<f64>() > 1e-6);
        let sal = DensityMap::new(W, H, values).unwrap();
        let g = DensityMap::new(W, H, gt).unwrap();
        let fix = fixation_set(&[(fx, fy)]);
        let judd = auc_judd(&sal, &fix).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&judd));
        let c = cc(&sal, &g).unwrap().value;
        prop_assert!((-1.0..=1.0).contains(&c));
        let s = sim(&sal, &g).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert!(kl(&g, &sal).unwrap().value > -1e-9);
    }

    #[test]
    fn location_metrics_ignore_positive_scaling(values in arb_map(), k in 0.1f64..50.0, fx in 0..W, fy in 0..H) {
        prop_assume!(values.iter().any(|&v| v != values[0]));
        let sal = DensityMap::new(W, H, values.clone()).unwrap();
        let scaled = DensityMap::new(W, H, values.iter().map(|v| v * k).collect()).unwrap();
        let fix = fixation_set(&[(fx, fy), (0, 0)]);
        prop_assert!((nss(&sal, &fix).unwrap().value - nss(&scaled, &fix).unwrap().value).abs() < 1e-9);
        prop_assert!((sim(&sal, &sal).unwrap().value - 1.0).abs() < 1e-12);
        prop_assert!((cc(&sal, &scaled).unwrap().value - 1.0).abs() < 1e-12);
    }
}
