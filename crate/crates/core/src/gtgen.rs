//! Ground-truth density maps: pool every observer's fixations into a count
//! map, then blur with a Gaussian whose sigma corresponds to a visual angle.

use crate::error::{Error, Result};
use crate::types::{DensityMap, FixationSet, ManifestEntry};

/// Blur width in visual degrees and kernel truncation in multiples of sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurSpec {
    pub sigma_degrees: f64,
    pub truncation_radius: f64,
}

impl Default for BlurSpec {
    fn default() -> Self {
        Self {
            sigma_degrees: 1.0,
            truncation_radius: 4.0,
        }
    }
}

impl BlurSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_degrees > 0.0 && self.sigma_degrees.is_finite()) {
            return Err(Error::InvalidBlurSpec(format!(
                "sigma_degrees must be positive, got {}",
                self.sigma_degrees
            )));
        }
        if !(self.truncation_radius >= 3.0 && self.truncation_radius.is_finite()) {
            return Err(Error::InvalidBlurSpec(format!(
                "truncation_radius must be at least 3, got {}",
                self.truncation_radius
            )));
        }
        Ok(())
    }
}

/// Counts fixations per pixel. An empty set yields an all-zero map, which
/// reports [`DensityMap::is_zero_mass`].
pub fn accumulate_fixations(fix: &FixationSet, width: usize, height: usize) -> Result<DensityMap> {
    let mut counts = vec![0.0; width * height];
    for p in fix.points() {
        if p.x >= width || p.y >= height {
            return Err(Error::OutOfBounds {
                x: p.x as i64,
                y: p.y as i64,
                width,
                height,
            });
        }
        counts[p.y * width + p.x] += 1.0;
    }
    DensityMap::new(width, height, counts)
}

/// Unit-sum symmetric kernel with `radius` taps on each side.
pub fn gaussian_kernel(sigma: f64, truncation: f64) -> Vec<f64> {
    let radius = (truncation * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Half-sample symmetric reflection of an arbitrary offset into `0..n`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Scatters every nonzero sample through the kernel. The reflected operator
/// is symmetric, so this equals the usual gather form while costing
/// `nonzeros * taps`; fixation maps are mostly zeros.
fn convolve_line(src: &[f64], dst: &mut [f64], kernel: &[f64]) {
    let n = src.len();
    let radius = (kernel.len() / 2) as isize;
    dst.fill(0.0);
    for (j, &v) in src.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let base = j as isize - radius;
        if base >= 0 && (base as usize + kernel.len()) <= n {
            let window = &mut dst[base as usize..base as usize + kernel.len()];
            for (out, w) in window.iter_mut().zip(kernel) {
                *out += w * v;
            }
        } else {
            for (k, w) in kernel.iter().enumerate() {
                dst[reflect(base + k as isize, n)] += w * v;
            }
        }
    }
}

/// Separable Gaussian blur.
///
/// The kernel is truncated at `spec.truncation_radius * sigma_px` and
/// renormalized to unit sum. Borders use half-sample symmetric reflection,
/// which makes the blur operator symmetric and doubly stochastic: constant
/// maps stay constant and total mass is conserved.
pub fn gaussian_blur(map: &DensityMap, sigma_px: f64, spec: &BlurSpec) -> Result<DensityMap> {
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma_px));
    }
    if !(spec.truncation_radius >= 3.0 && spec.truncation_radius.is_finite()) {
        return Err(Error::InvalidBlurSpec(format!(
            "truncation_radius must be at least 3, got {}",
            spec.truncation_radius
        )));
    }
    let (w, h) = (map.width(), map.height());
    let kernel = gaussian_kernel(sigma_px, spec.truncation_radius);

    let mut rows = vec![0.0; w * h];
    for (src, dst) in map.values().chunks(w).zip(rows.chunks_mut(w)) {
        convolve_line(src, dst, &kernel);
    }

    let mut out = vec![0.0; w * h];
    let mut column = vec![0.0; h];
    let mut blurred = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = rows[y * w + x];
        }
        convolve_line(&column, &mut blurred, &kernel);
        for y in 0..h {
            out[y * w + x] = blurred[y].max(0.0);
        }
    }
    DensityMap::new(w, h, out)
}

/// Pooled fixations blurred at `pixels_per_degree * sigma_degrees`, normalized.
pub fn make_ground_truth(
    fix: &FixationSet,
    entry: &ManifestEntry,
    spec: &BlurSpec,
) -> Result<DensityMap> {
    spec.validate()?;
    if fix.is_empty() {
        return Err(Error::EmptyFixations);
    }
    let counts = accumulate_fixations(fix, entry.width, entry.height)?;
    let sigma_px = entry.pixels_per_degree * spec.sigma_degrees;
    gaussian_blur(&counts, sigma_px, spec)?.normalize_to_distribution()
}
