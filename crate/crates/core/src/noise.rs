//! Sensor noise for rendered depth: a depth-proportional Gamma factor plus
//! a spatially correlated additive Gaussian field.
//!
//! The corrupted image is `alpha * y + eps`. `alpha ~ Gamma(k, s)` is drawn
//! once per image. `eps` is realized by sampling an i.i.d. standard normal
//! grid of size ceil(H/l) x ceil(W/l), bicubically upsampling it to H x W,
//! and rescaling per pixel so the marginal std is exactly `sigma`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Gamma shape (dimensionless).
    pub k: f64,
    /// Gamma scale (dimensionless); mean multiplier is k * s.
    pub s: f64,
    /// Marginal std of the additive field (meters).
    pub sigma: f64,
    /// Correlation bandwidth in pixels.
    pub l: usize,
    pub seed: u64,
    /// Draw one alpha per pixel instead of one per image.
    pub per_pixel_alpha: bool,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            k: 5000.0,
            s: 0.0002,
            sigma: 0.001,
            l: 6,
            seed: 0,
            per_pixel_alpha: false,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !(self.s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma parameters must be positive (k={}, s={})",
                self.k, self.s
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        if self.l < 1 {
            return Err(Error::InvalidArgument("bandwidth l must be >= 1".into()));
        }
        Ok(())
    }

    /// Independent seed for viewpoint `i` so per-view corruption can run in
    /// parallel while staying reproducible.
    pub fn for_viewpoint(&self, i: usize) -> NoiseParams {
        NoiseParams {
            seed: self.seed ^ i as u64,
            ..*self
        }
    }
}

/// Catmull-Rom weights for the four taps around fractional offset `t`.
fn cubic_weights(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        (-t3 + 2.0 * t2 - t) / 2.0,
        (3.0 * t3 - 5.0 * t2 + 2.0) / 2.0,
        (-3.0 * t3 + 4.0 * t2 + t) / 2.0,
        (t3 - t2) / 2.0,
    ]
}

/// Per-axis taps: clamped coarse indices with merged weights for duplicates,
/// so the per-pixel variance (sum of squared weights) stays exact at borders.
fn axis_taps(pix: usize, l: usize, coarse_len: usize) -> ([usize; 4], [f64; 4], f64) {
    let g = pix as f64 / l as f64;
    let base = g.floor() as i64;
    let w = cubic_weights(g - base as f64);
    let mut idx = [0usize; 4];
    let mut wm = [0.0f64; 4];
    for k in 0..4 {
        let ci = (base - 1 + k as i64).clamp(0, coarse_len as i64 - 1) as usize;
        // merge with an earlier tap that clamped to the same coarse cell
        let mut merged = false;
        for j in 0..k {
            if idx[j] == ci {
                wm[j] += w[k];
                merged = true;
                break;
            }
        }
        if !merged {
            idx[k] = ci;
            wm[k] = w[k];
        }
    }
    let ss = wm.iter().map(|x| x * x).sum();
    (idx, wm, ss)
}

/// Corrupt `img` per the model above. Valid pixels become
/// `max(alpha * y + eps, 0)`; invalid pixels stay 0. Fully determined by
/// `p.seed`.
pub fn corrupt(img: &DepthImage, p: &NoiseParams) -> Result<DepthImage> {
    p.validate()?;
    let (w, h) = (img.width, img.height);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let gamma = Gamma::new(p.k, p.s)
        .map_err(|e| Error::InvalidArgument(format!("gamma distribution: {e}")))?;
    let alpha_global = gamma.sample(&mut rng);

    let cw = w.div_ceil(p.l);
    let ch = h.div_ceil(p.l);
    let normal = rand_distr::StandardNormal;
    let coarse: Vec<f64> = (0..cw * ch).map(|_| normal.sample(&mut rng)).collect();

    let mut out = DepthImage::new(w, h);
    for v in 0..h {
        let (yi, yw, yss) = axis_taps(v, p.l, ch);
        for u in 0..w {
            let y = img.get(u, v);
            if !img.is_valid(u, v) {
                continue;
            }
            let alpha = if p.per_pixel_alpha {
                gamma.sample(&mut rng)
            } else {
                alpha_global
            };
            let eps = if p.sigma > 0.0 {
                let (xi, xw, xss) = axis_taps(u, p.l, cw);
                let mut acc = 0.0;
                for j in 0..4 {
                    for i in 0..4 {
                        acc += yw[j] * xw[i] * coarse[yi[j] * cw + xi[i]];
                    }
                }
                p.sigma * acc / (xss * yss).sqrt()
            } else {
                0.0
            };
            out.set(u, v, (alpha * y + eps).max(0.0));
        }
    }
    Ok(out)
}
