//! Location- and distribution-based saliency metrics.
//!
//! Conventions follow the MIT saliency benchmark: AUC-Judd thresholds at the
//! saliency values of fixated pixels, AUC-Borji and sAUC average over
//! `n_splits` random negative sets, NSS uses the population standard
//! deviation and KL is measured as KL(ground truth || prediction).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{DensityMap, Fixation, FixationSet, SeededRng};

/// Regularizer used by KL, `2^-52`.
pub const KL_EPSILON: f64 = 2.2204e-16;

/// Standard deviation below which a map is treated as constant.
pub const DEGENERATE_STD: f64 = 1e-12;

/// A metric value with a flag for the sentinel returned on constant maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    pub fn ok(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    pub fn degenerate(value: f64) -> Self {
        Self {
            value,
            degenerate: true,
        }
    }
}

/// The eight benchmark metrics, in the column order of the comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    AucJudd,
    Sim,
    Emd,
    AucBorji,
    Sauc,
    Cc,
    Nss,
    Kl,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::AucJudd,
        Metric::Sim,
        Metric::Emd,
        Metric::AucBorji,
        Metric::Sauc,
        Metric::Cc,
        Metric::Nss,
        Metric::Kl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AucJudd => "AUC-Judd",
            Metric::Sim => "SIM",
            Metric::Emd => "EMD",
            Metric::AucBorji => "AUC-Borji",
            Metric::Sauc => "sAUC",
            Metric::Cc => "CC",
            Metric::Nss => "NSS",
            Metric::Kl => "KL",
        }
    }

    /// KL and EMD are distances; every other metric improves upward.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Kl | Metric::Emd)
    }

    pub fn arrow(self) -> &'static str {
        if self.higher_is_better() {
            "↑"
        } else {
            "↓"
        }
    }

    /// Parses a comma-separated list, preserving the canonical column order.
    pub fn parse_list(list: &str) -> Result<Vec<Metric>> {
        let mut out = Vec::new();
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Metric = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out.sort();
        Ok(out)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "aucjudd" | "judd" => Metric::AucJudd,
            "sim" | "similarity" => Metric::Sim,
            "emd" => Metric::Emd,
            "aucborji" | "borji" => Metric::AucBorji,
            "sauc" | "shuffledauc" | "aucshuffled" => Metric::Sauc,
            "cc" => Metric::Cc,
            "nss" => Metric::Nss,
            "kl" | "kld" => Metric::Kl,
            _ => return Err(Error::UnknownMetric(s.to_string())),
        })
    }
}

/// Points of an ROC curve sorted by false-positive rate, (0,0) and (1,1) included.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Sweeps every threshold in `thresholds` (any order, duplicates allowed),
    /// counting `positives >= t` and `negatives >= t`.
    pub fn from_scores(positives: &[f64], negatives: &[f64], thresholds: &[f64]) -> Self {
        let desc = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        let pos = desc(positives);
        let neg = desc(negatives);
        let mut ts = desc(thresholds);
        ts.dedup();

        let (np, nn) = (pos.len() as f64, neg.len() as f64);
        let mut points = Vec::with_capacity(ts.len() + 2);
        points.push((0.0, 0.0));
        let (mut ip, mut in_) = (0, 0);
        for t in ts {
            while ip < pos.len() && pos[ip] >= t {
                ip += 1;
            }
            while in_ < neg.len() && neg[in_] >= t {
                in_ += 1;
            }
            let fpr = if nn > 0.0 { in_ as f64 / nn } else { 0.0 };
            let tpr = if np > 0.0 { ip as f64 / np } else { 0.0 };
            points.push((fpr, tpr));
        }
        points.push((1.0, 1.0));
        Self { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

fn is_constant(map: &DensityMap) -> bool {
    let v = map.values();
    v.iter().all(|&x| x == v[0])
}

fn check_location_inputs(sal: &DensityMap, fix: &FixationSet) -> Result<()> {
    fix.check_matches(sal)?;
    if fix.is_empty() {
        return Err(Error::EmptyFixations);
    }
    Ok(())
}

fn fixated_values(sal: &DensityMap, fix: &FixationSet) -> Vec<f64> {
    fix.indices().map(|i| sal.values()[i]).collect()
}

/// AUC-Judd: thresholds at fixated saliency values; negatives are every
/// pixel that holds no fixation.
pub fn auc_judd(sal: &DensityMap, fix: &FixationSet) -> Result<Score> {
    check_location_inputs(sal, fix)?;
    let positives = fixated_values(sal, fix);
    let mut fixated = vec![false; sal.len()];
    for i in fix.indices() {
        fixated[i] = true;
    }
    let negatives: Vec<f64> = sal
        .values()
        .iter()
        .zip(&fixated)
        .filter(|(_, &f)| !f)
        .map(|(&v, _)| v)
        .collect();
    if negatives.is_empty() || is_constant(sal) {
        return Ok(Score::degenerate(0.5));
    }
    let roc = RocCurve::from_scores(&positives, &negatives, &positives);
    Ok(Score::ok(roc.area()))
}

/// Split count and seed schedule for the sampled AUC variants.
///
/// Negatives for image `stream_key` come from
/// `seed.stream(stream_key, "AUC-Borji")` (or `"sAUC"`), so results do not
/// depend on the order in which images are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct AucConfig {
    pub n_splits: usize,
    pub seed: SeededRng,
    pub stream_key: String,
}

impl AucConfig {
    pub fn new(n_splits: usize, seed: SeededRng, stream_key: impl Into<String>) -> Self {
        Self {
            n_splits,
            seed,
            stream_key: stream_key.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_splits == 0 {
            return Err(Error::InvalidAucConfig("n_splits must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for AucConfig {
    fn default() -> Self {
        Self::new(100, SeededRng::default(), "")
    }
}

fn split_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut thresholds = Vec::with_capacity(positives.len() + negatives.len());
    thresholds.extend_from_slice(positives);
    thresholds.extend_from_slice(negatives);
    RocCurve::from_scores(positives, negatives, &thresholds).area()
}

/// AUC-Borji: per split, `|fix|` negatives drawn uniformly with replacement
/// over all pixels; mean area over splits.
pub fn auc_borji(sal: &DensityMap, fix: &FixationSet, cfg: &AucConfig) -> Result<Score> {
    check_location_inputs(sal, fix)?;
    cfg.validate()?;
    let positives = fixated_values(sal, fix);
    let mut rng = cfg.seed.stream(&cfg.stream_key, Metric::AucBorji.name());
    let n_pixels = sal.len();
    let mut negatives = vec![0.0; positives.len()];
    let mut total = 0.0;
    for _ in 0..cfg.n_splits {
        for n in negatives.iter_mut() {
            *n = sal.values()[rng.gen_range(0..n_pixels)];
        }
        total += split_auc(&positives, &negatives);
    }
    let value = total / cfg.n_splits as f64;
    if is_constant(sal) {
        Ok(Score::degenerate(value))
    } else {
        Ok(Score::ok(value))
    }
}

/// Shuffled AUC: negatives drawn with replacement from the fixation
/// locations of other images, clamped into this image's bounds.
pub fn sauc(
    sal: &DensityMap,
    fix: &FixationSet,
    other_fixations: &[Fixation],
    cfg: &AucConfig,
) -> Result<Score> {
    check_location_inputs(sal, fix)?;
    cfg.validate()?;
    if other_fixations.is_empty() {
        return Err(Error::EmptyNegativePool);
    }
    let (w, h) = (sal.width(), sal.height());
    let pool: Vec<f64> = other_fixations
        .iter()
        .map(|p| sal.get(p.x.min(w - 1), p.y.min(h - 1)))
        .collect();
    let positives = fixated_values(sal, fix);
    let mut rng = cfg.seed.stream(&cfg.stream_key, Metric::Sauc.name());
    let mut negatives = vec![0.0; positives.len()];
    let mut total = 0.0;
    for _ in 0..cfg.n_splits {
        for n in negatives.iter_mut() {
            *n = pool[rng.gen_range(0..pool.len())];
        }
        total += split_auc(&positives, &negatives);
    }
    let value = total / cfg.n_splits as f64;
    if is_constant(sal) {
        Ok(Score::degenerate(value))
    } else {
        Ok(Score::ok(value))
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Normalized scanpath saliency: mean z-score of the map at fixations.
pub fn nss(sal: &DensityMap, fix: &FixationSet) -> Result<Score> {
    check_location_inputs(sal, fix)?;
    let (mean, std) = mean_and_std(sal.values());
    if std < DEGENERATE_STD {
        return Ok(Score::degenerate(0.0));
    }
    let sum: f64 = fix.indices().map(|i| (sal.values()[i] - mean) / std).sum();
    Ok(Score::ok(sum / fix.len() as f64))
}

/// Pearson correlation between the two maps over all pixels.
pub fn cc(sal: &DensityMap, gt: &DensityMap) -> Result<Score> {
    sal.check_same_shape(gt)?;
    let (ms, ss) = mean_and_std(sal.values());
    let (mg, sg) = mean_and_std(gt.values());
    if ss < DEGENERATE_STD || sg < DEGENERATE_STD {
        return Ok(Score::degenerate(0.0));
    }
    let n = sal.len() as f64;
    let cov = sal
        .values()
        .iter()
        .zip(gt.values())
        .map(|(a, b)| (a - ms) * (b - mg))
        .sum::<f64>()
        / n;
    Ok(Score::ok((cov / (ss * sg)).clamp(-1.0, 1.0)))
}

/// Histogram intersection of the two maps after normalizing each to sum one.
pub fn sim(sal: &DensityMap, gt: &DensityMap) -> Result<Score> {
    sal.check_same_shape(gt)?;
    let s = sal.normalize_to_distribution()?;
    let g = gt.normalize_to_distribution()?;
    let v = s
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| a.min(*b))
        .sum::<f64>();
    Ok(Score::ok(v))
}

/// KL(gt || sal) with the benchmark regularization
/// `sum gt * ln(gt / (sal + eps) + eps)`.
pub fn kl(gt: &DensityMap, sal: &DensityMap) -> Result<Score> {
    gt.check_same_shape(sal)?;
    let g = gt.normalize_to_distribution()?;
    let s = sal.normalize_to_distribution()?;
    let v = g
        .values()
        .iter()
        .zip(s.values())
        .map(|(p, q)| p * (p / (q + KL_EPSILON) + KL_EPSILON).ln())
        .sum::<f64>();
    Ok(Score::ok(v))
}
