//! Vessel quantification: FAZ-referenced noise threshold, multiscale vesselness, adaptive
//! binarization, thinning, perimeter extraction and the five vascular indices.

mod biomarkers;
mod frangi;
mod morphology;
mod threshold;

use serde::{Deserialize, Serialize};

pub use biomarkers::{compute_biomarkers, BiomarkerReport, VesselMaps};
pub use frangi::{
    frangi_response, frangi_vesselness, hessian, hessian_eigenvalues, vesselness, FrangiParams,
};
pub use morphology::{perimeter_map, skeletonize};
pub use threshold::{
    apply_hard_threshold, binarize_adaptive, default_window, faz_threshold, masked_mean_std,
};

use crate::error::Result;
use crate::raster::{Angiogram, Mask};

/// Diameter of the default FAZ disc, matching the inner bound of the parafoveal annulus.
pub const DEFAULT_FAZ_DIAMETER_UM: f64 = 600.0;

/// Pixels whose centers lie within `diameter_um / 2` of `center_um`.
pub fn disc_mask(img: &Angiogram, center_um: [f64; 2], diameter_um: f64) -> Mask {
    let grid = img.grid();
    let r2 = (diameter_um / 2.0).powi(2);
    Mask::from_fn(img.width(), img.height(), |x, y| {
        let p = grid.to_physical([x as f64, y as f64]);
        (p[0] - center_um[0]).powi(2) + (p[1] - center_um[1]).powi(2) <= r2
    })
}

/// The fixed 0.6 mm disc at the image's physical center.
pub fn default_faz_mask(img: &Angiogram) -> Mask {
    disc_mask(img, img.center_um(), DEFAULT_FAZ_DIAMETER_UM)
}

/// Settings of the full quantification chain. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifyParams {
    pub frangi: FrangiParams,
    pub sensitivity: f64,
    /// `None` selects `2 * floor(min(w, h) / 16) + 1`.
    pub window_px: Option<usize>,
}

impl Default for QuantifyParams {
    fn default() -> Self {
        Self {
            frangi: FrangiParams::default(),
            sensitivity: 0.5,
            window_px: None,
        }
    }
}

/// What the binarization step was applied to.
pub const BINARIZATION_INPUT: &str = "frangi_vesselness";

#[derive(Debug, Clone)]
pub struct Quantification {
    pub threshold: f64,
    pub vesselness: Angiogram,
    pub maps: VesselMaps,
    pub report: BiomarkerReport,
}

/// Threshold at FAZ mean + 2 std, filter, binarize the vesselness, thin, outline, measure.
pub fn quantify(img: &Angiogram, faz_mask: &Mask, params: &QuantifyParams) -> Result<Quantification> {
    let threshold = faz_threshold(img, faz_mask)?;
    let cleaned = apply_hard_threshold(img, threshold);
    let vesselness = frangi_vesselness(&cleaned, &params.frangi)?;
    let area = binarize_adaptive(&vesselness, params.sensitivity, params.window_px)?;
    let maps = VesselMaps::from_area(area, img.spacing_um());
    let report = compute_biomarkers(&maps);
    Ok(Quantification {
        threshold,
        vesselness,
        maps,
        report,
    })
}
