//! Value types shared by every stage of the pipeline: density maps, fixation
//! sets, dataset manifests and the seeded RNG contract.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a map flagged as normalized.
pub const NORMALIZED_TOLERANCE: f64 = 1e-9;

/// Checks the [`DensityMap`] invariants on raw parts, reporting the first violation.
pub fn validate_map(width: usize, height: usize, values: &[f64]) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyMap);
    }
    if values.len() != width * height {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values for {width}x{height}", width * height),
            actual: format!("{} values", values.len()),
        });
    }
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeValue { index, value });
        }
    }
    Ok(())
}

/// Non-negative row-major grid of saliency or density values.
///
/// Construction validates; once built a map is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl DensityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        validate_map(width, height, &values)?;
        Ok(Self {
            width,
            height,
            values,
            normalized: false,
        })
    }

    /// Builds a map from rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(width * height);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    expected: format!("rows of length {width}"),
                    actual: format!("row of length {}", row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(width, height, values)
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_zero_mass(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// True when the map came out of [`DensityMap::normalize_to_distribution`].
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn same_shape(&self, other: &DensityMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_shape(&self, other: &DensityMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            })
        }
    }

    /// Index of the first maximal value in row-major order.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Rescales the map so that it sums to one.
    pub fn normalize_to_distribution(&self) -> Result<DensityMap> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let values: Vec<f64> = self.values.iter().map(|v| v / total).collect();
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZED_TOLERANCE {
            return Err(Error::NumericalFailure(format!(
                "normalized mass {sum} outside tolerance"
            )));
        }
        Ok(DensityMap {
            width: self.width,
            height: self.height,
            values,
            normalized: true,
        })
    }
}

/// One gaze point, zero-based with `x` the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fixation {
    pub x: usize,
    pub y: usize,
    pub observer: u32,
}

/// Rounds a sub-pixel coordinate to the nearest pixel, ties rounding up.
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Discrete fixations recorded on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationSet {
    width: usize,
    height: usize,
    points: Vec<Fixation>,
}

impl FixationSet {
    pub fn new(width: usize, height: usize, points: Vec<Fixation>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyMap);
        }
        for p in &points {
            if p.x >= width || p.y >= height {
                return Err(Error::OutOfBounds {
                    x: p.x as i64,
                    y: p.y as i64,
                    width,
                    height,
                });
            }
        }
        Ok(Self {
            width,
            height,
            points,
        })
    }

    /// Accepts sub-pixel coordinates, rounding each to the nearest pixel.
    pub fn from_fractional(
        width: usize,
        height: usize,
        points: impl IntoIterator<Item = (f64, f64, u32)>,
    ) -> Result<Self> {
        let mut out = Vec::new();
        for (fx, fy, observer) in points {
            if !fx.is_finite() || !fy.is_finite() {
                return Err(Error::NonFinite { index: out.len() });
            }
            let (x, y) = (round_half_up(fx), round_half_up(fy));
            if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
                return Err(Error::OutOfBounds {
                    x,
                    y,
                    width,
                    height,
                });
            }
            out.push(Fixation {
                x: x as usize,
                y: y as usize,
                observer,
            });
        }
        Self::new(width, height, out)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[Fixation] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major pixel index of every fixation, one entry per fixation.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(move |p| p.y * self.width + p.x)
    }

    pub(crate) fn check_matches(&self, map: &DensityMap) -> Result<()> {
        if self.width == map.width() && self.height == map.height() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{}x{}", map.width(), map.height()),
                actual: format!("fixations on {}x{}", self.width, self.height),
            })
        }
    }
}

/// Per-image metadata from a dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub pixels_per_degree: f64,
    pub fixation_path: PathBuf,
    /// Model name to saliency-map file.
    pub map_paths: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::DuplicateImageId(e.image_id.clone()));
            }
            if !(e.pixels_per_degree > 0.0 && e.pixels_per_degree.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "image `{}`: pixels_per_degree must be positive",
                    e.image_id
                )));
            }
            if e.width == 0 || e.height == 0 {
                return Err(Error::EmptyMap);
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    /// Sorted union of the model names referenced by any entry.
    pub fn models(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .entries
            .iter()
            .flat_map(|e| e.map_paths.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Master seed from which every sampling stream is derived.
///
/// A stream is keyed by `(master_seed, image_id, purpose)` through SHA-256, so
/// it does not depend on evaluation order or on how many other streams exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeededRng {
    pub master_seed: u64,
}

impl SeededRng {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream_seed(&self, image_id: &str, purpose: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((image_id.len() as u64).to_le_bytes());
        hasher.update(image_id.as_bytes());
        hasher.update(purpose.as_bytes());
        hasher.finalize().into()
    }

    pub fn stream(&self, image_id: &str, purpose: &str) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.stream_seed(image_id, purpose))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn valid_map_accepted() {
        assert!(DensityMap::from_rows(&[[0.0, 1.0], [2.0, 3.0]]).is_ok());
    }

    #[test]
    fn negative_rejected() {
        assert_eq!(
            validate_map(1, 1, &[-1.0]),
            Err(Error::NegativeValue {
                index: 0,
                value: -1.0
            })
        );
    }

    #[test]
    fn nan_rejected() {
        assert_eq!(
            validate_map(1, 1, &[f64::NAN]),
            Err(Error::NonFinite { index: 0 })
        );
    }

    #[test]
    fn zero_size_rejected() {
        assert_eq!(validate_map(0, 3, &[]), Err(Error::EmptyMap));
        assert!(matches!(
            validate_map(2, 2, &[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let m = DensityMap::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(m.normalize_to_distribution().unwrap().values(), &[0.25; 4]);
        let m = DensityMap::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(
            m.normalize_to_distribution().unwrap().values(),
            &[1.0, 0.0, 0.0, 0.0]
        );
        let m = DensityMap::from_rows(&[[1.0, 3.0], [0.0, 0.0]]).unwrap();
        let n = m.normalize_to_distribution().unwrap();
        assert_eq!(n.values(), &[0.25, 0.75, 0.0, 0.0]);
        assert!(n.is_normalized());
        assert!(!m.is_normalized());
    }

    #[test]
    fn normalize_zero_mass() {
        let m = DensityMap::zeros(3, 2).unwrap();
        assert_eq!(m.normalize_to_distribution(), Err(Error::ZeroMass));
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round_half_up(0.5), 1);
        assert_eq!(round_half_up(1.49), 1);
        assert_eq!(round_half_up(-0.5), 0);
        let f = FixationSet::from_fractional(4, 4, [(2.5, 0.4, 1)]).unwrap();
        assert_eq!(f.points()[0], Fixation { x: 3, y: 0, observer: 1 });
        assert!(matches!(
            FixationSet::from_fractional(4, 4, [(3.5, 0.0, 1)]),
            Err(Error::OutOfBounds { x: 4, .. })
        ));
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let e = ManifestEntry {
            image_id: "a".into(),
            width: 2,
            height: 2,
            pixels_per_degree: 1.0,
            fixation_path: "a.csv".into(),
            map_paths: BTreeMap::new(),
        };
        assert_eq!(
            DatasetManifest::new(vec![e.clone(), e]),
            Err(Error::DuplicateImageId("a".into()))
        );
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let rng = SeededRng::new(42);
        let draw = |id: &str| {
            let mut s = rng.stream(id, "sauc");
            (0..10_000).map(|_| s.next_u64()).collect::<Vec<_>>()
        };
        let a = draw("img-1");
        assert_eq!(a, draw("img-1"));
        let ids: Vec<String> = (0..20).map(|i| format!("img-{i}")).collect();
        let streams: Vec<Vec<u64>> = ids.iter().map(|id| draw(id)).collect();
        for i in 0..streams.len() {
            for j in i + 1..streams.len() {
                assert_ne!(streams[i], streams[j]);
            }
        }
        assert_ne!(
            SeededRng::new(1).stream_seed("x", "p"),
            SeededRng::new(2).stream_seed("x", "p")
        );
    }

    fn arb_map() -> impl Strategy<Value = DensityMap> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            prop::collection::vec(0.0f64..10.0, w * h)
                .prop_filter("non-zero mass", |v| v.iter().sum::<f64>() > 1e-6)
                .prop_map(move |v| DensityMap::new(w, h, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_idempotent(m in arb_map()) {
            let once = m.normalize_to_distribution().unwrap();
            let twice = once.normalize_to_distribution().unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalize_preserves_argmax(m in arb_map()) {
            prop_assert_eq!(m.argmax(), m.normalize_to_distribution().unwrap().argmax());
        }
    }
}
