//! Report aggregation, Pearson correlation with a t-test, and model
//! comparison tables.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::metrics::Metric;

/// One scored (model, image, metric) cell.
///
/// `score` is `None` when the metric could not be computed; the reason is in
/// `flags`. Degenerate-but-defined scores keep their sentinel value and carry
/// a `degenerate` flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub model: String,
    pub image: String,
    pub metric: Metric,
    pub score: Option<f64>,
    pub flags: String,
}

impl Record {
    pub fn key(&self) -> (&str, &str, Metric) {
        (&self.model, &self.image, self.metric)
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Settings echoed into every report so results can be reproduced.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub seed: u64,
    pub splits: usize,
    pub emd_max_side: usize,
    pub emd_downsample: bool,
    pub metrics: Vec<Metric>,
    pub sigma_degrees: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            splits: 100,
            emd_max_side: 32,
            emd_downsample: true,
            metrics: Metric::ALL.to_vec(),
            sigma_degrees: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    config: EvalConfig,
    records: Vec<Record>,
}

impl EvalReport {
    /// Sorts records by key and rejects duplicates.
    pub fn new(config: EvalConfig, mut records: Vec<Record>) -> Result<Self> {
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        if let Some(w) = records.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::DuplicateRecord {
                model: w[0].model.clone(),
                image: w[0].image.clone(),
                metric: w[0].metric.name().into(),
            });
        }
        Ok(Self { config, records })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn models(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.model.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_flagged()).count()
    }

    /// Combines reports evaluated with the same settings.
    pub fn merge(reports: &[EvalReport]) -> Result<EvalReport> {
        let first = reports.first().ok_or(Error::EmptyReport)?;
        if let Some(other) = reports.iter().find(|r| r.config != first.config) {
            return Err(Error::DegenerateInput(format!(
                "reports disagree on settings: {:?} vs {:?}",
                first.config, other.config
            )));
        }
        let records = reports.iter().flat_map(|r| r.records.iter().cloned()).collect();
        EvalReport::new(first.config.clone(), records)
    }
}

/// Mean score of one model on one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub model: String,
    pub metric: Metric,
    /// `None` when no image produced a score.
    pub mean: Option<f64>,
    /// Images that produced a score.
    pub scored: usize,
    /// Images whose record carries a flag (degenerate or failed).
    pub flagged: usize,
}

/// Unweighted per-image mean for each (model, metric). Degenerate sentinel
/// scores are averaged in; failed cells are skipped but counted as flagged.
pub fn aggregate(report: &EvalReport) -> Result<Vec<AggregateRow>> {
    if report.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut acc: BTreeMap<(&str, Metric), (f64, usize, usize)> = BTreeMap::new();
    for r in &report.records {
        let e = acc.entry((&r.model, r.metric)).or_insert((0.0, 0, 0));
        if let Some(s) = r.score {
            e.0 += s;
            e.1 += 1;
        }
        if r.is_flagged() {
            e.2 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((model, metric), (sum, scored, flagged))| AggregateRow {
            model: model.into(),
            metric,
            mean: (scored > 0).then(|| sum / scored as f64),
            scored,
            flagged,
        })
        .collect())
}

pub fn aggregate_markdown(rows: &[AggregateRow]) -> String {
    let mut out = String::from("| Model | Metric | Mean | Images | Flagged |\n|---|---|---:|---:|---:|\n");
    for r in rows {
        let mean = r.mean.map_or("n/a".to_string(), |m| format!("{m:.6}"));
        out.push_str(&format!(
            "| {} | {} {} | {} | {} | {} |\n",
            r.model,
            r.metric.name(),
            r.metric.arrow(),
            mean,
            r.scored,
            r.flagged
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub r: f64,
    /// Two-sided p-value of the t-test on `r`.
    pub p: f64,
    pub t: f64,
    pub n: usize,
}

/// Pearson's r together with the two-sided p-value of
/// `t = r * sqrt((n - 2) / (1 - r^2))` on `n - 2` degrees of freedom.
pub fn pearson(points: &[(f64, f64)]) -> Result<Pearson> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 points, got {n}")));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::DegenerateInput("non-finite coordinate".into()));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("constant series".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let (t, p) = if r.abs() == 1.0 {
        (r.signum() * f64::INFINITY, 0.0)
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        (t, student_t_two_sided(t, df))
    };
    Ok(Pearson { r, p, t, n })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)` by the continued fraction, evaluated with the modified Lentz
/// method on whichever tail converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 / guard(1.0 + even * d);
        c = guard(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 / guard(1.0 + odd * d);
        c = guard(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Builds `y` values whose Pearson correlation with `x` is exactly `r` (up to
/// rounding): the centered `x` direction is mixed with `noise` made
/// orthogonal to it, then mapped to the given mean and standard deviation.
pub fn series_with_correlation(
    x: &[f64],
    noise: &[f64],
    r: f64,
    mean: f64,
    std: f64,
) -> Result<Vec<f64>> {
    if x.len() != noise.len() || x.len() < 3 || !(-1.0..=1.0).contains(&r) {
        return Err(Error::DegenerateInput(
            "need equal-length series of at least 3 points and |r| <= 1".into(),
        ));
    }
    let unit = |v: Vec<f64>| -> Result<Vec<f64>> {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateInput("series has no spread".into()));
        }
        Ok(v.into_iter().map(|a| a / norm).collect())
    };
    let center = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| a - m).collect::<Vec<f64>>()
    };
    let u = unit(center(x))?;
    let e = center(noise);
    let along: f64 = e.iter().zip(&u).map(|(a, b)| a * b).sum();
    let e = unit(e.iter().zip(&u).map(|(a, b)| a - along * b).collect())?;
    let scale = std * (x.len() as f64).sqrt();
    Ok(u
        .iter()
        .zip(&e)
        .map(|(a, b)| mean + scale * (r * a + (1.0 - r * r).sqrt() * b))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyPoint {
    pub model: String,
    /// Top-1 classification accuracy in percent.
    pub accuracy: f64,
    pub score: f64,
}

/// Classification accuracy against a saliency metric across models.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStudy {
    pub metric: String,
    pub points: Vec<StudyPoint>,
}

impl CorrelationStudy {
    pub fn new(metric: impl Into<String>, points: Vec<StudyPoint>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::DegenerateInput(format!(
                "need at least 3 models, got {}",
                points.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(0.0..=100.0).contains(&p.accuracy) || !p.score.is_finite())
        {
            return Err(Error::DegenerateInput(format!(
                "model `{}`: accuracy {} outside [0, 100] or score {} not finite",
                p.model, p.accuracy, p.score
            )));
        }
        Ok(Self {
            metric: metric.into(),
            points,
        })
    }

    pub fn pearson(&self) -> Result<Pearson> {
        let xy: Vec<(f64, f64)> = self.points.iter().map(|p| (p.accuracy, p.score)).collect();
        pearson(&xy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub values: Vec<Option<f64>>,
}

/// Per-model mean scores with best-per-column markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub metrics: Vec<Metric>,
    /// The reference row comes first when present; other rows are sorted by name.
    pub rows: Vec<ComparisonRow>,
    pub baseline: Option<String>,
    /// Models holding the best value of each column (all of them on ties).
    pub best: Vec<BTreeSet<String>>,
}

impl ComparisonTable {
    pub fn is_best(&self, model: &str, column: usize) -> bool {
        self.best[column].contains(model)
    }

    pub fn to_markdown(&self, decimals: usize) -> String {
        let mut out = String::from("| Model |");
        for m in &self.metrics {
            out.push_str(&format!(" {} {} |", m.name(), m.arrow()));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.metrics.len()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.model));
            for (i, v) in row.values.iter().enumerate() {
                match v {
                    Some(v) if self.is_best(&row.model, i) => {
                        out.push_str(&format!(" **{v:.decimals$}** |"))
                    }
                    Some(v) => out.push_str(&format!(" {v:.decimals$} |")),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Builds a comparison table from one or more reports.
///
/// Every model must have been scored on the same images for each metric.
/// `baseline`, when given, names a reference row (for example human
/// fixation maps) that is listed first and does not compete for the best
/// markers.
pub fn compare_models(reports: &[EvalReport], baseline: Option<&str>) -> Result<ComparisonTable> {
    let mut records: BTreeMap<(String, String, Metric), &Record> = BTreeMap::new();
    for report in reports {
        for r in report.records() {
            let key = (r.model.clone(), r.image.clone(), r.metric);
            if records.insert(key, r).is_some() {
                return Err(Error::DuplicateRecord {
                    model: r.model.clone(),
                    image: r.image.clone(),
                    metric: r.metric.name().into(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let metrics: Vec<Metric> = records
        .keys()
        .map(|k| k.2)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let models: BTreeSet<String> = records.keys().map(|k| k.0.clone()).collect();
    if let Some(b) = baseline {
        if !models.contains(b) {
            return Err(Error::DegenerateInput(format!("baseline model `{b}` not in reports")));
        }
    }

    // image sets per (model, metric)
    let mut images: BTreeMap<(&str, Metric), BTreeSet<&str>> = BTreeMap::new();
    for (model, image, metric) in records.keys() {
        images.entry((model, *metric)).or_default().insert(image);
    }
    let empty = BTreeSet::new();
    for &metric in &metrics {
        let sets: Vec<(&str, &BTreeSet<&str>)> = models
            .iter()
            .map(|m| (m.as_str(), images.get(&(m.as_str(), metric)).unwrap_or(&empty)))
            .collect();
        let (ref_model, ref_set) = sets[0];
        if let Some((model, set)) = sets.iter().find(|(_, s)| *s != ref_set) {
            return Err(Error::MismatchedImageSets(format!(
                "{}: `{ref_model}` has {} images, `{model}` has {} ({} differ)",
                metric.name(),
                ref_set.len(),
                set.len(),
                ref_set.symmetric_difference(set).count()
            )));
        }
    }

    let merged = EvalReport::new(
        reports[0].config.clone(),
        records.values().map(|r| (*r).clone()).collect(),
    )?;
    let means: BTreeMap<(String, Metric), Option<f64>> = aggregate(&merged)?
        .into_iter()
        .map(|a| ((a.model, a.metric), a.mean))
        .collect();

    let mut ordered: Vec<&String> = models.iter().collect();
    if let Some(b) = baseline {
        ordered.retain(|m| m.as_str() != b);
        ordered.insert(0, models.get(b).expect("checked above"));
    }
    let rows: Vec<ComparisonRow> = ordered
        .iter()
        .map(|m| ComparisonRow {
            model: (*m).clone(),
            values: metrics
                .iter()
                .map(|&metric| means.get(&((*m).clone(), metric)).copied().flatten())
                .collect(),
        })
        .collect();

    let best = metrics
        .iter()
        .enumerate()
        .map(|(i, metric)| {
            let contenders = rows
                .iter()
                .filter(|r| Some(r.model.as_str()) != baseline)
                .filter_map(|r| r.values[i].map(|v| (r.model.as_str(), v)));
            let pick = |a: f64, b: f64| {
                if metric.higher_is_better() {
                    a.max(b)
                } else {
                    a.min(b)
                }
            };
            let target = contenders.clone().map(|c| c.1).reduce(pick);
            match target {
                Some(t) => contenders
                    .filter(|c| c.1 == t)
                    .map(|c| c.0.to_string())
                    .collect(),
                None => BTreeSet::new(),
            }
        })
        .collect();

    Ok(ComparisonTable {
        metrics,
        rows,
        baseline: baseline.map(str::to_string),
        best,
    })
}
