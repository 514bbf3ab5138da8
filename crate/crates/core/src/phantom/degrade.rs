use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::filter;
use crate::raster::{provenance, resample, resample_to_grid, Angiogram, ResampleMethod};

use super::rng_for;

/// Low-sampling simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeParams {
    pub coarse_spacing_um: f64,
    pub psf_sigma_um: f64,
    /// Standard deviation of the multiplicative speckle factor `1 + N(0, s)`.
    pub speckle_sigma: f64,
}

impl Default for DegradeParams {
    fn default() -> Self {
        Self {
            coarse_spacing_um: 22.86,
            psf_sigma_um: 10.0,
            speckle_sigma: 0.04,
        }
    }
}

const SPECKLE_STREAM: u64 = 11;

/// PSF blur, area-average onto the coarse grid, bicubic back onto the input grid,
/// multiplicative speckle, clamp. The output shares the input's grid.
pub fn degrade(img: &Angiogram, p: &DegradeParams, seed: u64) -> Result<Angiogram> {
    ensure!(
        p.coarse_spacing_um.is_finite() && p.coarse_spacing_um > img.spacing_um(),
        InvalidParameter,
        "coarse spacing {} um must exceed the native {} um",
        p.coarse_spacing_um,
        img.spacing_um()
    );
    ensure!(
        p.psf_sigma_um >= 0.0 && p.speckle_sigma >= 0.0,
        InvalidParameter,
        "degradation sigmas must be non-negative"
    );
    let grid = img.grid();
    let blurred = filter::gaussian_blur(
        &img.to_f64(),
        grid.width,
        grid.height,
        p.psf_sigma_um / grid.spacing_um,
    );
    let blurred = img.with_values(&blurred)?;
    let coarse = resample(&blurred, p.coarse_spacing_um, ResampleMethod::AreaAverage)?;
    let back = resample_to_grid(&coarse, &grid, ResampleMethod::Bicubic)?;
    let mut values = back.to_f64();
    if p.speckle_sigma > 0.0 {
        let mut rng = rng_for(seed, SPECKLE_STREAM);
        for v in values.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v *= 1.0 + p.speckle_sigma * z;
        }
    }
    Ok(Angiogram::from_values(grid, provenance::DEGRADED, &values)?)
}
