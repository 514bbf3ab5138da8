use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::filter;
use crate::raster::Angiogram;

use super::rng_for;

/// Ranges `[min, max]` the augmentation parameters are drawn from, uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub blur_sigma_px: [f64; 2],
    pub contrast_gamma: [f64; 2],
    pub gauss_noise_sigma: [f64; 2],
    pub rotation_deg: [f64; 2],
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            blur_sigma_px: [0.0, 1.0],
            contrast_gamma: [0.8, 1.25],
            gauss_noise_sigma: [0.0, 0.03],
            rotation_deg: [-180.0, 180.0],
        }
    }
}

impl AugmentParams {
    /// Every transform at its identity value.
    pub fn identity() -> Self {
        Self {
            blur_sigma_px: [0.0, 0.0],
            contrast_gamma: [1.0, 1.0],
            gauss_noise_sigma: [0.0, 0.0],
            rotation_deg: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |r: [f64; 2], lo: f64, hi: f64| lo <= r[0] && r[0] <= r[1] && r[1] <= hi;
        ensure!(
            within(self.blur_sigma_px, 0.0, 3.0),
            InvalidParameter,
            "blur range {:?} must lie in [0, 3] px",
            self.blur_sigma_px
        );
        ensure!(
            within(self.contrast_gamma, 0.5, 2.0),
            InvalidParameter,
            "gamma range {:?} must lie in [0.5, 2]",
            self.contrast_gamma
        );
        ensure!(
            within(self.gauss_noise_sigma, 0.0, 0.1),
            InvalidParameter,
            "noise range {:?} must lie in [0, 0.1]",
            self.gauss_noise_sigma
        );
        ensure!(
            within(self.rotation_deg, -180.0, 180.0),
            InvalidParameter,
            "rotation range {:?} must lie in [-180, 180] degrees",
            self.rotation_deg
        );
        Ok(())
    }
}

const AUGMENT_STREAM: u64 = 21;

fn draw(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// Blur, gamma, additive Gaussian noise, then rotation about the image center with
/// bilinear sampling and zero fill.
pub fn augment(img: &Angiogram, p: &AugmentParams, seed: u64) -> Result<Angiogram> {
    p.validate()?;
    let mut rng = rng_for(seed, AUGMENT_STREAM);
    let sigma = draw(&mut rng, p.blur_sigma_px);
    let gamma = draw(&mut rng, p.contrast_gamma);
    let noise = draw(&mut rng, p.gauss_noise_sigma);
    let angle = draw(&mut rng, p.rotation_deg).to_radians();
    let (w, h) = (img.width(), img.height());

    let mut v = filter::gaussian_blur(&img.to_f64(), w, h, sigma);
    if gamma != 1.0 {
        v.iter_mut().for_each(|x| *x = x.max(0.0).powf(gamma));
    }
    if noise > 0.0 {
        for x in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = (*x + noise * z).clamp(0.0, 1.0);
        }
    }
    if angle != 0.0 {
        v = rotate(&v, w, h, angle);
    }
    img.with_values(&v)
}

/// Output pixel `p` takes the input at `R(-angle) (p - c) + c`; samples falling outside
/// the pixel-center extent are zero.
fn rotate(v: &[f64], w: usize, h: usize, angle: f64) -> Vec<f64> {
    const EDGE_EPS: f64 = 1e-9;
    let (s, c) = angle.sin_cos();
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let (mx, my) = ((w - 1) as f64, (h - 1) as f64);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            if sx < -EDGE_EPS || sy < -EDGE_EPS || sx > mx + EDGE_EPS || sy > my + EDGE_EPS {
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, mx), sy.clamp(0.0, my));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let at = |xx: usize, yy: usize| v[yy * w + xx];
            out[y * w + x] = (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0))
                + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1));
        }
    }
    out
}
