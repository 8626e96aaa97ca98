//! Saliency-map evaluation engine.
//!
//! Builds ground-truth fixation densities, scores predicted maps with the
//! eight standard benchmark metrics (AUC-Judd, AUC-Borji, sAUC, NSS, CC, SIM,
//! KL, EMD), provides the resampling and readout operators used by
//! multi-scale saliency networks, plans backbone channel/resolution tables,
//! and aggregates per-image scores into comparison and correlation reports.

pub mod analysis;
pub mod archplan;
pub mod error;
pub mod emd;
pub mod eval;
pub mod gtgen;
pub mod io;
pub mod metrics;
pub mod resample;
pub mod types;

pub use error::{Error, Result};
pub use types::{DatasetManifest, DensityMap, Fixation, FixationSet, ManifestEntry, SeededRng};
