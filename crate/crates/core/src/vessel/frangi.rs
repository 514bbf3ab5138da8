//! Multiscale Hessian vesselness for bright tubular structures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::filter;
use crate::raster::Angiogram;

/// Scales are in pixels. `beta` weights the blob ratio, `c` the structureness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrangiParams {
    pub scale_min_px: f64,
    pub scale_max_px: f64,
    pub scale_step_px: f64,
    pub beta: f64,
    pub c: f64,
}

impl Default for FrangiParams {
    fn default() -> Self {
        Self {
            scale_min_px: 0.8,
            scale_max_px: 1.5,
            scale_step_px: 0.1,
            beta: 0.5,
            c: 30.0,
        }
    }
}

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.scale_min_px > 0.0 && self.scale_min_px <= self.scale_max_px,
            InvalidParameter,
            "need 0 < scale_min <= scale_max, got [{}, {}]",
            self.scale_min_px,
            self.scale_max_px
        );
        ensure!(self.scale_step_px > 0.0, InvalidParameter, "scale step must be positive");
        ensure!(self.beta > 0.0, InvalidParameter, "beta must be positive");
        ensure!(self.c > 0.0, InvalidParameter, "c must be positive");
        Ok(())
    }

    /// `scale_min, scale_min + step, ...` up to and including `scale_max`.
    pub fn scales(&self) -> Vec<f64> {
        let n = ((self.scale_max_px - self.scale_min_px) / self.scale_step_px + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| self.scale_min_px + k as f64 * self.scale_step_px)
            .collect()
    }
}

/// Hessian eigenvalues ordered so that `|l1| <= |l2|`.
#[inline]
pub fn hessian_eigenvalues(dxx: f64, dxy: f64, dyy: f64) -> (f64, f64) {
    let half_trace = 0.5 * (dxx + dyy);
    let disc = (0.25 * (dxx - dyy).powi(2) + dxy * dxy).sqrt();
    let (a, b) = (half_trace + disc, half_trace - disc);
    if a.abs() <= b.abs() {
        (a, b)
    } else {
        (b, a)
    }
}

/// Vesselness of one Hessian, bright structures on a dark background.
#[inline]
pub fn vesselness(l1: f64, l2: f64, beta: f64, c: f64) -> f64 {
    if l2 >= 0.0 {
        return 0.0;
    }
    let rb = l1 / l2;
    let s2 = l1 * l1 + l2 * l2;
    (-rb * rb / (2.0 * beta * beta)).exp() * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

/// Scale-normalized (`sigma^2`) Hessian components `(dxx, dxy, dyy)` at one scale.
pub fn hessian(data: &[f64], width: usize, height: usize, sigma: f64) -> [Vec<f64>; 3] {
    let (g0, g1, g2) = filter::gaussian_derivative_kernels(sigma);
    let s2 = sigma * sigma;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * s2).collect::<Vec<_>>();
    let dxx = scale(filter::separable(data, width, height, &g2, &g0));
    let dyy = scale(filter::separable(data, width, height, &g0, &g2));
    let dxy = scale(filter::separable(data, width, height, &g1, &g1));
    [dxx, dxy, dyy]
}

/// Maximum vesselness over scales, before output normalization.
///
/// The input is first divided by its own maximum so that a global gain change does not
/// alter the response; the fixed `c` then acts on a unit-peak image.
pub fn frangi_response(img: &Angiogram, p: &FrangiParams) -> Result<Vec<f64>> {
    p.validate()?;
    let min_side = img.width().min(img.height()) as f64;
    ensure!(
        min_side >= 6.0 * p.scale_max_px,
        InvalidParameter,
        "image side {min_side} px is smaller than 6 x largest scale ({})",
        p.scale_max_px
    );
    let (w, h) = (img.width(), img.height());
    let mut data = img.to_f64();
    let peak = data.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Ok(vec![0.0; w * h]);
    }
    data.iter_mut().for_each(|v| *v /= peak);

    let per_scale: Vec<Vec<f64>> = p
        .scales()
        .par_iter()
        .map(|&sigma| {
            let [dxx, dxy, dyy] = hessian(&data, w, h, sigma);
            (0..w * h)
                .map(|i| {
                    let (l1, l2) = hessian_eigenvalues(dxx[i], dxy[i], dyy[i]);
                    vesselness(l1, l2, p.beta, p.c)
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0f64; w * h];
    for response in &per_scale {
        for (o, r) in out.iter_mut().zip(response) {
            *o = o.max(*r);
        }
    }
    Ok(out)
}

/// Multiscale vesselness rescaled to `[0, 1]` by its own maximum.
pub fn frangi_vesselness(img: &Angiogram, p: &FrangiParams) -> Result<Angiogram> {
    let mut response = frangi_response(img, p)?;
    let peak = response.iter().cloned().fold(0.0f64, f64::max);
    if peak > 0.0 {
        response.iter_mut().for_each(|v| *v /= peak);
    }
    img.with_values(&response)
}
