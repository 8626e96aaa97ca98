//! Batch evaluation of model saliency maps over a dataset manifest.

use rayon::prelude::*;

use crate::analysis::{EvalConfig, EvalReport, Record};
use crate::emd::{emd_metric, EmdConfig};
use crate::error::{Error, Result};
use crate::gtgen::{make_ground_truth, BlurSpec};
use crate::io::{read_fixations, read_map};
use crate::metrics::{auc_borji, auc_judd, cc, kl, nss, sauc, sim, AucConfig, Metric, Score};
use crate::types::{DatasetManifest, DensityMap, Fixation, FixationSet, ManifestEntry, SeededRng};

pub const DEGENERATE_FLAG: &str = "degenerate";
pub const MISSING_MAP_FLAG: &str = "missing-map";

pub fn error_flag(err: &Error) -> String {
    format!("error:{}", err.kind())
}

/// Everything needed to score one image, independent of the model.
pub struct ImageContext<'a> {
    pub entry: &'a ManifestEntry,
    pub fixations: &'a FixationSet,
    pub ground_truth: &'a DensityMap,
    /// Fixations of every other image, the sAUC negative pool.
    pub other_fixations: &'a [Fixation],
}

pub fn blur_spec(cfg: &EvalConfig) -> BlurSpec {
    BlurSpec {
        sigma_degrees: cfg.sigma_degrees,
        ..BlurSpec::default()
    }
}

pub fn emd_config(cfg: &EvalConfig) -> EmdConfig {
    EmdConfig {
        max_side: cfg.emd_max_side,
        downsample: cfg.emd_downsample,
    }
}

pub fn auc_config(cfg: &EvalConfig, image_id: &str) -> AucConfig {
    AucConfig::new(cfg.splits, SeededRng::new(cfg.seed), image_id)
}

pub fn score_metric(
    metric: Metric,
    sal: &DensityMap,
    ctx: &ImageContext<'_>,
    cfg: &EvalConfig,
) -> Result<Score> {
    let fix = ctx.fixations;
    let gt = ctx.ground_truth;
    match metric {
        Metric::AucJudd => auc_judd(sal, fix),
        Metric::AucBorji => auc_borji(sal, fix, &auc_config(cfg, &ctx.entry.image_id)),
        Metric::Sauc => sauc(sal, fix, ctx.other_fixations, &auc_config(cfg, &ctx.entry.image_id)),
        Metric::Nss => nss(sal, fix),
        Metric::Cc => cc(sal, gt),
        Metric::Sim => sim(sal, gt),
        Metric::Kl => kl(gt, sal),
        Metric::Emd => emd_metric(sal, gt, &emd_config(cfg)).map(|o| Score::ok(o.value)),
    }
}

fn record(model: &str, image: &str, metric: Metric, result: Result<Score>) -> Record {
    let (score, flags) = match result {
        Ok(s) if s.degenerate => (Some(s.value), DEGENERATE_FLAG.to_string()),
        Ok(s) => (Some(s.value), String::new()),
        Err(e) => (None, error_flag(&e)),
    };
    Record {
        model: model.into(),
        image: image.into(),
        metric,
        score,
        flags,
    }
}

fn flag_all(models: &[String], image: &str, metrics: &[Metric], flags: &str) -> Vec<Record> {
    models
        .iter()
        .flat_map(|m| {
            metrics.iter().map(move |&metric| Record {
                model: m.clone(),
                image: image.into(),
                metric,
                score: None,
                flags: flags.into(),
            })
        })
        .collect()
}

/// Scores one model's map on one image for every requested metric.
pub fn score_map(model: &str, sal: &DensityMap, ctx: &ImageContext<'_>, cfg: &EvalConfig) -> Vec<Record> {
    cfg.metrics
        .iter()
        .map(|&m| record(model, &ctx.entry.image_id, m, score_metric(m, sal, ctx, cfg)))
        .collect()
}

fn validate(cfg: &EvalConfig) -> Result<()> {
    if cfg.splits == 0 {
        return Err(Error::InvalidAucConfig("splits must be at least 1".into()));
    }
    emd_config(cfg).validate()?;
    blur_spec(cfg).validate()?;
    if cfg.metrics.is_empty() {
        return Err(Error::UnknownMetric("empty metric list".into()));
    }
    Ok(())
}

fn evaluate_image(
    index: usize,
    manifest: &DatasetManifest,
    fixations: &[Result<FixationSet>],
    models: &[String],
    cfg: &EvalConfig,
) -> Vec<Record> {
    let entry = &manifest.entries()[index];
    let id = entry.image_id.as_str();
    let fix = match &fixations[index] {
        Ok(f) => f,
        Err(e) => return flag_all(models, id, &cfg.metrics, &error_flag(e)),
    };
    let gt = match make_ground_truth(fix, entry, &blur_spec(cfg)) {
        Ok(g) => g,
        Err(e) => return flag_all(models, id, &cfg.metrics, &error_flag(&e)),
    };
    let pool: Vec<Fixation> = if cfg.metrics.contains(&Metric::Sauc) {
        fixations
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != index)
            .filter_map(|(_, f)| f.as_ref().ok())
            .flat_map(|f| f.points().iter().copied())
            .collect()
    } else {
        Vec::new()
    };
    let ctx = ImageContext {
        entry,
        fixations: fix,
        ground_truth: &gt,
        other_fixations: &pool,
    };
    let mut out = Vec::with_capacity(models.len() * cfg.metrics.len());
    for model in models {
        let one = std::slice::from_ref(model);
        match entry.map_paths.get(model) {
            None => out.extend(flag_all(one, id, &cfg.metrics, MISSING_MAP_FLAG)),
            Some(path) => match read_map(path) {
                Ok(sal) => out.extend(score_map(model, &sal, &ctx, cfg)),
                Err(e) => out.extend(flag_all(one, id, &cfg.metrics, &error_flag(&e))),
            },
        }
    }
    out
}

/// Evaluates every (model, image, metric) cell. Images run concurrently on
/// `jobs` threads (`0` means all cores); per-image failures become flagged
/// rows. The result does not depend on `jobs` or scheduling order.
pub fn run_eval(
    manifest: &DatasetManifest,
    models: &[String],
    cfg: &EvalConfig,
    jobs: usize,
) -> Result<EvalReport> {
    validate(cfg)?;
    let models: Vec<String> = if models.is_empty() {
        manifest.models()
    } else {
        models.to_vec()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Io {
            path: "thread pool".into(),
            message: e.to_string(),
        })?;
    let records = pool.install(|| {
        let fixations: Vec<Result<FixationSet>> = manifest
            .entries()
            .par_iter()
            .map(|e| read_fixations(&e.fixation_path, e.width, e.height))
            .collect();
        (0..manifest.entries().len())
            .into_par_iter()
            .flat_map_iter(|i| evaluate_image(i, manifest, &fixations, &models, cfg))
            .collect::<Vec<Record>>()
    });
    EvalReport::new(cfg.clone(), records)
}

/// Ground-truth maps for every image, in manifest order.
pub fn ground_truths(
    manifest: &DatasetManifest,
    spec: &BlurSpec,
    jobs: usize,
) -> Result<Vec<(String, Result<DensityMap>)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Io {
            path: "thread pool".into(),
            message: e.to_string(),
        })?;
    Ok(pool.install(|| {
        manifest
            .entries()
            .par_iter()
            .map(|e| {
                let gt = read_fixations(&e.fixation_path, e.width, e.height)
                    .and_then(|f| make_ground_truth(&f, e, spec));
                (e.image_id.clone(), gt)
            })
            .collect()
    }))
}
