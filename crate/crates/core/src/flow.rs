//! Vessel caliber from intensity profiles and parafoveal signal-to-noise.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::raster::{Angiogram, Mask};
use crate::vessel::masked_mean_std;

/// Minimum number of samples in a profile.
pub const MIN_PROFILE_SAMPLES: usize = 8;

/// Bilinear samples taken at evenly spaced points along a physical segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    pub samples: Vec<f64>,
    pub sample_spacing_um: f64,
    pub endpoints_um: [[f64; 2]; 2],
}

impl IntensityProfile {
    pub fn new(samples: Vec<f64>, sample_spacing_um: f64) -> Result<Self> {
        ensure!(
            samples.len() >= MIN_PROFILE_SAMPLES,
            InvalidParameter,
            "profile needs at least {MIN_PROFILE_SAMPLES} samples, got {}",
            samples.len()
        );
        ensure!(
            sample_spacing_um.is_finite() && sample_spacing_um > 0.0,
            InvalidParameter,
            "sample spacing must be positive"
        );
        let length = sample_spacing_um * (samples.len() - 1) as f64;
        Ok(Self {
            samples,
            sample_spacing_um,
            endpoints_um: [[0.0, 0.0], [length, 0.0]],
        })
    }
}

/// Samples `img` at `n_samples` points from `p0` to `p1` (physical coordinates).
pub fn intensity_profile(
    img: &Angiogram,
    p0_um: [f64; 2],
    p1_um: [f64; 2],
    n_samples: usize,
) -> Result<IntensityProfile> {
    ensure!(
        n_samples >= MIN_PROFILE_SAMPLES,
        InvalidParameter,
        "profile needs at least {MIN_PROFILE_SAMPLES} samples, got {n_samples}"
    );
    let grid = img.grid();
    let eps = 1e-9;
    for p in [p0_um, p1_um] {
        let idx = grid.to_index(p);
        let inside = idx[0] >= -eps
            && idx[1] >= -eps
            && idx[0] <= (img.width() - 1) as f64 + eps
            && idx[1] <= (img.height() - 1) as f64 + eps;
        if !inside {
            return Err(Error::OutOfBounds(format!(
                "profile endpoint {p:?} lies outside the image"
            )));
        }
    }
    let length = ((p1_um[0] - p0_um[0]).powi(2) + (p1_um[1] - p0_um[1]).powi(2)).sqrt();
    ensure!(length > 0.0, InvalidParameter, "profile endpoints coincide");
    let samples = (0..n_samples)
        .map(|i| {
            let t = i as f64 / (n_samples - 1) as f64;
            let p = [
                p0_um[0] + t * (p1_um[0] - p0_um[0]),
                p0_um[1] + t * (p1_um[1] - p0_um[1]),
            ];
            let idx = grid.to_index(p);
            img.sample_bilinear(idx[0], idx[1])
        })
        .collect();
    Ok(IntensityProfile {
        samples,
        sample_spacing_um: length / (n_samples - 1) as f64,
        endpoints_um: [p0_um, p1_um],
    })
}

/// Full width at half maximum above the profile minimum, in micrometers.
///
/// A flat-topped peak (a run of equal maxima) counts as one peak. Crossings of the half
/// level are located by linear interpolation on each side of the peak.
pub fn fwhm(profile: &IntensityProfile) -> Result<f64> {
    let s = &profile.samples;
    ensure!(
        s.len() >= MIN_PROFILE_SAMPLES,
        InvalidParameter,
        "profile needs at least {MIN_PROFILE_SAMPLES} samples"
    );
    ensure!(
        s.iter().all(|v| v.is_finite()),
        InvalidParameter,
        "profile contains non-finite samples"
    );
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure!(max > min, Degenerate, "flat profile has no peak");

    let peaks: Vec<usize> = (0..s.len()).filter(|&i| s[i] == max).collect();
    let (first, last) = (peaks[0], *peaks.last().unwrap());
    if last - first + 1 != peaks.len() {
        return Err(Error::Degenerate(format!(
            "profile has several separated maxima at samples {peaks:?}"
        )));
    }
    if first == 0 || last == s.len() - 1 {
        return Err(Error::Degenerate(format!(
            "peak at sample {} touches the profile boundary",
            if first == 0 { first } else { last }
        )));
    }
    let half = min + 0.5 * (max - min);
    let left = (0..first)
        .rev()
        .find(|&i| s[i] <= half)
        .ok_or_else(|| Error::Degenerate("no half-maximum crossing left of the peak".into()))?;
    let right = (last + 1..s.len())
        .find(|&i| s[i] <= half)
        .ok_or_else(|| Error::Degenerate("no half-maximum crossing right of the peak".into()))?;
    let cross = |below: usize, above: usize| -> f64 {
        let (a, b) = (s[below], s[above]);
        let t = (half - a) / (b - a);
        below as f64 + t * (above as f64 - below as f64)
    };
    let x_left = cross(left, left + 1);
    let x_right = cross(right, right - 1);
    Ok((x_right - x_left) * profile.sample_spacing_um)
}

/// Relative caliber deviation from a reference width, in percent.
pub fn caliber_discrepancy(width_um: f64, reference_um: f64) -> Result<f64> {
    ensure!(
        reference_um.is_finite() && reference_um > 0.0,
        InvalidParameter,
        "reference width must be positive, got {reference_um}"
    );
    Ok((width_um - reference_um).abs() / reference_um * 100.0)
}

/// Parafoveal annulus, diameters in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub center_um: [f64; 2],
    pub outer_diameter_um: f64,
    pub inner_diameter_um: f64,
}

impl AnnulusSpec {
    pub const DEFAULT_OUTER_UM: f64 = 2500.0;
    pub const DEFAULT_INNER_UM: f64 = 600.0;

    pub fn new(center_um: [f64; 2], outer_diameter_um: f64, inner_diameter_um: f64) -> Result<Self> {
        ensure!(
            inner_diameter_um > 0.0 && inner_diameter_um < outer_diameter_um,
            InvalidParameter,
            "need 0 < inner < outer, got inner {inner_diameter_um}, outer {outer_diameter_um}"
        );
        Ok(Self {
            center_um,
            outer_diameter_um,
            inner_diameter_um,
        })
    }

    /// Default diameters, centered on the image.
    pub fn centered(img: &Angiogram) -> Self {
        Self {
            center_um: img.center_um(),
            outer_diameter_um: Self::DEFAULT_OUTER_UM,
            inner_diameter_um: Self::DEFAULT_INNER_UM,
        }
    }

    /// Pixels whose centers fall inside the ring, boundaries included.
    pub fn mask(&self, img: &Angiogram) -> Mask {
        let grid = img.grid();
        let (ri2, ro2) = (
            (self.inner_diameter_um / 2.0).powi(2),
            (self.outer_diameter_um / 2.0).powi(2),
        );
        Mask::from_fn(img.width(), img.height(), |x, y| {
            let p = grid.to_physical([x as f64, y as f64]);
            let d2 = (p[0] - self.center_um[0]).powi(2) + (p[1] - self.center_um[1]).powi(2);
            d2 >= ri2 && d2 <= ro2
        })
    }

    fn fits_inside(&self, img: &Angiogram) -> bool {
        let grid = img.grid();
        let r = self.outer_diameter_um / 2.0;
        let lo = grid.to_physical([0.0, 0.0]);
        let hi = grid.to_physical([(img.width() - 1) as f64, (img.height() - 1) as f64]);
        let tol = 1e-6 * grid.spacing_um;
        self.center_um[0] - r >= lo[0] - grid.spacing_um / 2.0 - tol
            && self.center_um[1] - r >= lo[1] - grid.spacing_um / 2.0 - tol
            && self.center_um[0] + r <= hi[0] + grid.spacing_um / 2.0 + tol
            && self.center_um[1] + r <= hi[1] + grid.spacing_um / 2.0 + tol
    }
}

/// Profile samples per native pixel along a caliber site.
pub const PROFILE_OVERSAMPLING: f64 = 4.0;

/// A physical segment laid across one vessel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaliberSite {
    /// File stem of the image the site belongs to; empty when it applies to any image.
    #[serde(default)]
    pub image: String,
    pub p0_um: [f64; 2],
    pub p1_um: [f64; 2],
    /// `None` samples at [`PROFILE_OVERSAMPLING`] points per pixel.
    #[serde(default)]
    pub n_samples: Option<usize>,
}

impl CaliberSite {
    pub fn samples_for(&self, img: &Angiogram) -> usize {
        self.n_samples.unwrap_or_else(|| {
            let length = ((self.p1_um[0] - self.p0_um[0]).powi(2)
                + (self.p1_um[1] - self.p0_um[1]).powi(2))
            .sqrt();
            let n = (length / img.spacing_um() * PROFILE_OVERSAMPLING).ceil() as usize + 1;
            n.max(MIN_PROFILE_SAMPLES)
        })
    }
}

/// FWHM of the profile across `site`, in micrometers.
pub fn site_width(img: &Angiogram, site: &CaliberSite) -> Result<f64> {
    let profile = intensity_profile(img, site.p0_um, site.p1_um, site.samples_for(img))?;
    fwhm(&profile)
}

/// Mean parafoveal signal above the FAZ mean, in units of the FAZ standard deviation.
pub fn parafoveal_snr(img: &Angiogram, annulus: &AnnulusSpec, faz_mask: &Mask) -> Result<f64> {
    ensure!(
        annulus.fits_inside(img),
        OutOfBounds,
        "annulus of diameter {} um does not fit inside the image",
        annulus.outer_diameter_um
    );
    let ring = annulus.mask(img);
    ensure!(!ring.is_empty(), Degenerate, "annulus contains no pixel centers");
    let ring_mean = ring
        .iter_set()
        .map(|(x, y)| img.get(x, y) as f64)
        .sum::<f64>()
        / ring.count() as f64;
    let (faz_mean, faz_std) = masked_mean_std(img, faz_mask)?;
    ensure!(faz_std > 0.0, Degenerate, "FAZ has zero variance");
    Ok((ring_mean - faz_mean) / faz_std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use proptest::prelude::*;

    fn gaussian_profile(sigma: f64, spacing: f64) -> IntensityProfile {
        let n = (12.0 * sigma).ceil() as usize * 2 + 1;
        let c = (n / 2) as f64;
        let s = (0..n)
            .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        IntensityProfile::new(s, spacing).unwrap()
    }

    #[test]
    fn gaussian_fwhm() {
        let closed_form = 2.0 * (2.0 * 2f64.ln()).sqrt();
        for sigma in [2.0, 5.0, 10.0] {
            let w = fwhm(&gaussian_profile(sigma, 12.24)).unwrap();
            let expected = closed_form * sigma * 12.24;
            assert!((w - expected).abs() / expected < 0.02, "sigma {sigma}: {w} vs {expected}");
        }
        let w = fwhm(&gaussian_profile(5.0, 12.24)).unwrap();
        assert!((w - 144.1).abs() / 144.1 < 0.02);
    }

    #[test]
    fn box_pulse_fwhm() {
        let s: Vec<f64> = (0..30).map(|i| if (10..20).contains(&i) { 1.0 } else { 0.0 }).collect();
        let w = fwhm(&IntensityProfile::new(s, 2.0).unwrap()).unwrap();
        assert!((w - 20.0).abs() <= 2.0, "{w}");
    }

    #[test]
    fn fwhm_errors() {
        let ramp: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(fwhm(&IntensityProfile::new(ramp, 1.0).unwrap()).is_err());
        let two_peaks: Vec<f64> = (0..20)
            .map(|i| if i == 5 || i == 14 { 1.0 } else { 0.0 })
            .collect();
        let err = fwhm(&IntensityProfile::new(two_peaks, 1.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("[5, 14]"), "{err}");
        assert!(fwhm(&IntensityProfile::new(vec![0.5; 10], 1.0).unwrap()).is_err());
        assert!(IntensityProfile::new(vec![0.0; 5], 1.0).is_err());
    }

    #[test]
    fn discrepancy_arithmetic() {
        assert_eq!(caliber_discrepancy(20.0, 20.0).unwrap(), 0.0);
        assert_eq!(caliber_discrepancy(30.0, 20.0).unwrap(), 50.0);
        assert_eq!(caliber_discrepancy(10.0, 20.0).unwrap(), 50.0);
        assert!(caliber_discrepancy(10.0, 0.0).is_err());
    }

    fn grid(n: usize, s: f64) -> Grid {
        Grid {
            width: n,
            height: n,
            spacing_um: s,
            origin_um: [0.0, 0.0],
        }
    }

    #[test]
    fn constant_profile() {
        let img = Angiogram::constant(grid(20, 1.0), 0.3, "x").unwrap();
        let p = intensity_profile(&img, [1.0, 2.0], [15.0, 11.0], 16).unwrap();
        assert!(p.samples.iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn axis_aligned_profile_matches_row() {
        let img = Angiogram::from_fn(grid(20, 2.0), "x", |x, y| ((x * 3 + y) % 7) as f64 / 7.0).unwrap();
        let p = intensity_profile(&img, [0.0, 8.0], [38.0, 8.0], 20).unwrap();
        for (i, v) in p.samples.iter().enumerate() {
            assert!((v - img.get(i, 4) as f64).abs() < 1e-9);
        }
        assert!((p.sample_spacing_um - 2.0).abs() < 1e-12);
    }

    #[test]
    fn profile_out_of_bounds() {
        let img = Angiogram::constant(grid(20, 1.0), 0.3, "x").unwrap();
        assert!(intensity_profile(&img, [-1.0, 2.0], [15.0, 11.0], 16).is_err());
        assert!(intensity_profile(&img, [1.0, 2.0], [15.0, 11.0], 4).is_err());
    }

    fn snr_fixture() -> (Angiogram, AnnulusSpec, Mask) {
        // 40x40 px at 10 um; FAZ = central disc of 6 px radius
        let img = Angiogram::from_fn(grid(40, 10.0), "x", |x, y| {
            let d = ((x as f64 - 19.5).powi(2) + (y as f64 - 19.5).powi(2)).sqrt();
            if d < 6.0 {
                [0.1, 0.3][(x + y) % 2]
            } else {
                0.5 + 0.01 * ((x * y) % 5) as f64
            }
        })
        .unwrap();
        let faz = Mask::from_fn(40, 40, |x, y| {
            ((x as f64 - 19.5).powi(2) + (y as f64 - 19.5).powi(2)).sqrt() < 6.0
        });
        let annulus = AnnulusSpec::new(img.center_um(), 380.0, 140.0).unwrap();
        (img, annulus, faz)
    }

    #[test]
    fn snr_arithmetic() {
        // annulus constant 1.0 (scaled 10), FAZ {0.1, 0.3} alternating
        let img = Angiogram::from_fn(grid(40, 10.0), "x", |x, y| {
            let d = ((x as f64 - 19.5).powi(2) + (y as f64 - 19.5).powi(2)).sqrt();
            if d < 6.0 { [0.1, 0.3][(x + y) % 2] } else { 1.0 }
        })
        .unwrap();
        let (_, annulus, faz) = snr_fixture();
        let (m, s) = masked_mean_std(&img, &faz).unwrap();
        let snr = parafoveal_snr(&img, &annulus, &faz).unwrap();
        assert!((snr - (1.0 - m) / s).abs() < 1e-9);
        assert!((m - 0.2).abs() < 1e-6);
    }

    #[test]
    fn snr_null_case_is_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let img = Angiogram::from_fn(grid(120, 20.0), "x", |_, _| rng.random::<f64>()).unwrap();
        let faz = crate::vessel::disc_mask(&img, img.center_um(), 600.0);
        let annulus = AnnulusSpec::new(img.center_um(), 2300.0, 600.0).unwrap();
        let snr = parafoveal_snr(&img, &annulus, &faz).unwrap();
        assert!(snr.abs() < 3.0 / (faz.count() as f64).sqrt(), "{snr}");
    }

    #[test]
    fn snr_errors() {
        let (img, annulus, faz) = snr_fixture();
        assert!(parafoveal_snr(&img, &annulus, &Mask::new(40, 40)).is_err());
        let flat = Angiogram::constant(img.grid(), 0.2, "x").unwrap();
        assert!(parafoveal_snr(&flat, &annulus, &faz).is_err());
        let huge = AnnulusSpec::new(img.center_um(), 2000.0, 140.0).unwrap();
        assert!(parafoveal_snr(&img, &huge, &faz).is_err());
        assert!(AnnulusSpec::new([0.0, 0.0], 100.0, 200.0).is_err());
    }

    #[test]
    fn site_width_of_a_stripe() {
        let img = Angiogram::from_fn(grid(41, 10.0), "x", |x, _| {
            if (19..=21).contains(&x) { 1.0 } else { 0.0 }
        })
        .unwrap();
        let site = CaliberSite {
            image: String::new(),
            p0_um: [50.0, 200.0],
            p1_um: [350.0, 200.0],
            n_samples: None,
        };
        assert_eq!(site.samples_for(&img), 121);
        // bilinear ramps put the half level half a pixel outside the stripe on each side
        assert!((site_width(&img, &site).unwrap() - 30.0).abs() < 1e-9);
        let outside = CaliberSite {
            p1_um: [450.0, 200.0],
            ..site
        };
        assert!(site_width(&img, &outside).is_err());
    }

    proptest! {
        #[test]
        fn fwhm_affine_invariant(sigma in 1.5f64..6.0, a in 0.1f64..5.0, b in -2.0f64..2.0, shift in 0.0f64..1.0) {
            let n = 81;
            let c = 40.0 + shift;
            let base: Vec<f64> = (0..n).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
            let mapped: Vec<f64> = base.iter().map(|v| a * v + b).collect();
            let w0 = fwhm(&IntensityProfile::new(base, 1.0).unwrap()).unwrap();
            let w1 = fwhm(&IntensityProfile::new(mapped, 1.0).unwrap()).unwrap();
            prop_assert!((w0 - w1).abs() < 1e-9 * w0.max(1.0));
        }

        #[test]
        fn discrepancy_scale_invariant(w in 0.1f64..100.0, r in 0.1f64..100.0, k in 0.01f64..100.0) {
            prop_assert_eq!(caliber_discrepancy(w, w).unwrap(), 0.0);
            let a = caliber_discrepancy(w, r).unwrap();
            let b = caliber_discrepancy(k * w, k * r).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }

        #[test]
        fn snr_offset_and_gain_invariant(k in -0.09f64..0.4, g in 0.5f64..1.5) {
            let (img, annulus, faz) = snr_fixture();
            let base = parafoveal_snr(&img, &annulus, &faz).unwrap();
            let shifted = Angiogram::from_fn(img.grid(), "x", |x, y| img.get(x, y) as f64 + k).unwrap();
            let scaled = Angiogram::from_fn(img.grid(), "x", |x, y| img.get(x, y) as f64 * g).unwrap();
            prop_assert!((parafoveal_snr(&shifted, &annulus, &faz).unwrap() - base).abs() < 1e-4 * base.abs());
            prop_assert!((parafoveal_snr(&scaled, &annulus, &faz).unwrap() - base).abs() < 1e-4 * base.abs());
        }

        #[test]
        fn profile_reversal(x0 in 0.0f64..19.0, y0 in 0.0f64..19.0, x1 in 0.0f64..19.0, y1 in 0.0f64..19.0) {
            prop_assume!((x0 - x1).abs() + (y0 - y1).abs() > 0.1);
            let img = Angiogram::from_fn(grid(20, 1.0), "x", |x, y| ((x * 5 + y * 3) % 11) as f64 / 10.0).unwrap();
            let fwd = intensity_profile(&img, [x0, y0], [x1, y1], 12).unwrap();
            let mut back = intensity_profile(&img, [x1, y1], [x0, y0], 12).unwrap().samples;
            back.reverse();
            for (a, b) in fwd.samples.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
