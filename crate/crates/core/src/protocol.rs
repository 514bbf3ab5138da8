//! Scan-protocol arithmetic: sampling spacing, the Nyquist limit, and the A-line rate a
//! square raster needs to finish inside a fixed acquisition window.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Repeated B-scans per location assumed when none is given; two is the minimum any
/// motion-contrast algorithm can work with.
pub const DEFAULT_REPEATS: u32 = 2;

/// Acquisition window bounded by the interval between spontaneous blinks.
pub const DEFAULT_DURATION_S: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanProtocol {
    pub fov_um: f64,
    pub spacing_um: f64,
    pub repeats: u32,
    pub duration_s: f64,
}

impl ScanProtocol {
    pub fn new(fov_um: f64, spacing_um: f64, repeats: u32, duration_s: f64) -> Result<Self> {
        ensure!(
            fov_um.is_finite() && fov_um > 0.0,
            InvalidParameter,
            "fov must be positive, got {fov_um}"
        );
        ensure!(
            spacing_um.is_finite() && spacing_um > 0.0,
            InvalidParameter,
            "spacing must be positive, got {spacing_um}"
        );
        ensure!(
            spacing_um <= fov_um,
            InvalidParameter,
            "spacing {spacing_um} exceeds fov {fov_um}"
        );
        ensure!(repeats > 0, InvalidParameter, "repeats must be positive");
        ensure!(
            duration_s.is_finite() && duration_s > 0.0,
            InvalidParameter,
            "duration must be positive, got {duration_s}"
        );
        Ok(Self {
            fov_um,
            spacing_um,
            repeats,
            duration_s,
        })
    }

    /// Samples along one transverse direction, `fov / spacing` (not rounded).
    pub fn samples_per_line(&self) -> f64 {
        self.fov_um / self.spacing_um
    }
}

/// Center-to-center spacing when `samples` A-lines span `fov_um`.
pub fn sampling_spacing(fov_um: f64, samples: u32) -> Result<f64> {
    ensure!(samples >= 2, InvalidParameter, "need at least 2 samples, got {samples}");
    ensure!(
        fov_um.is_finite() && fov_um > 0.0,
        InvalidParameter,
        "fov must be positive, got {fov_um}"
    );
    Ok(fov_um / samples as f64)
}

/// Largest spacing that still samples an optical resolution at the Nyquist rate.
pub fn nyquist_spacing(optical_resolution_um: f64) -> Result<f64> {
    ensure!(
        optical_resolution_um.is_finite() && optical_resolution_um > 0.0,
        InvalidParameter,
        "optical resolution must be positive, got {optical_resolution_um}"
    );
    Ok(optical_resolution_um / 2.0)
}

/// Total A-lines of an evenly sampled square raster divided by the acquisition window, in Hz.
pub fn required_aline_rate(p: &ScanProtocol) -> f64 {
    let n = p.samples_per_line();
    n * n * p.repeats as f64 / p.duration_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clinical_scan_spacings() {
        assert!((sampling_spacing(3000.0, 245).unwrap() - 12.24).abs() < 0.05);
        assert!((sampling_spacing(8000.0, 350).unwrap() - 22.86).abs() < 0.05);
        assert_eq!(sampling_spacing(1000.0, 1000).unwrap(), 1.0);
        assert!(sampling_spacing(1000.0, 1).is_err());
        assert!(sampling_spacing(0.0, 10).is_err());
    }

    #[test]
    fn nyquist() {
        assert_eq!(nyquist_spacing(15.0).unwrap(), 7.5);
        assert_eq!(nyquist_spacing(2.0).unwrap(), 1.0);
        assert!(nyquist_spacing(0.0).is_err());
        assert!(nyquist_spacing(-3.0).is_err());
    }

    #[test]
    fn aline_rates() {
        let nyq = ScanProtocol::new(3000.0, 7.5, 4, 4.0).unwrap();
        assert_eq!(required_aline_rate(&nyq), 160_000.0);

        let clinical = ScanProtocol::new(3000.0, 12.24, 4, 4.0).unwrap();
        let oracle = (3000.0f64 / 12.24).powi(2);
        assert!((required_aline_rate(&clinical) - oracle).abs() < 1e-6);
        assert!((required_aline_rate(&clinical) - 60_050.0).abs() / 60_050.0 < 1e-3);

        let single = ScanProtocol::new(3000.0, 3000.0, 1, 1.0).unwrap();
        assert_eq!(required_aline_rate(&single), 1.0);
    }

    #[test]
    fn protocol_invariants() {
        assert!(ScanProtocol::new(100.0, 200.0, 2, 4.0).is_err());
        assert!(ScanProtocol::new(100.0, 10.0, 0, 4.0).is_err());
        assert!(ScanProtocol::new(100.0, 10.0, 2, 0.0).is_err());
        assert!(ScanProtocol::new(-1.0, 10.0, 2, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn rate_scaling(fov in 100.0f64..10_000.0, n in 2u32..600, repeats in 1u32..8, dur in 0.5f64..10.0) {
            let spacing = sampling_spacing(fov, n).unwrap();
            let p = ScanProtocol::new(fov, spacing, repeats, dur).unwrap();
            let rate = required_aline_rate(&p);
            let expected = (n as f64).powi(2) * repeats as f64 / dur;
            prop_assert!((rate - expected).abs() <= 1e-9 * expected);

            let doubled = ScanProtocol { repeats: repeats * 2, ..p };
            prop_assert!((required_aline_rate(&doubled) - 2.0 * rate).abs() <= 1e-9 * rate);
            let longer = ScanProtocol { duration_s: dur * 2.0, ..p };
            prop_assert!((required_aline_rate(&longer) - rate / 2.0).abs() <= 1e-9 * rate);
            let finer = ScanProtocol { spacing_um: spacing / 2.0, ..p };
            prop_assert!((required_aline_rate(&finer) - 4.0 * rate).abs() <= 1e-9 * rate);
        }
    }
}
