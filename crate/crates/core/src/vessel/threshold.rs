use crate::error::{ensure, Error, Result};
use crate::filter;
use crate::raster::{Angiogram, Mask};

/// Noise threshold from the avascular zone: mean plus two sample standard deviations of
/// the pixels under `faz_mask`.
pub fn faz_threshold(img: &Angiogram, faz_mask: &Mask) -> Result<f64> {
    check_shape(img, faz_mask)?;
    let (mean, std) = masked_mean_std(img, faz_mask)?;
    Ok(mean + 2.0 * std)
}

/// Mean and sample (n - 1) standard deviation of the pixels under `mask`.
pub fn masked_mean_std(img: &Angiogram, mask: &Mask) -> Result<(f64, f64)> {
    check_shape(img, mask)?;
    let values: Vec<f64> = mask
        .iter_set()
        .map(|(x, y)| img.get(x, y) as f64)
        .collect();
    ensure!(
        values.len() >= 2,
        Degenerate,
        "mask selects {} pixel(s); sample statistics need at least 2",
        values.len()
    );
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

pub(crate) fn check_shape(img: &Angiogram, mask: &Mask) -> Result<()> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", img.width(), img.height()),
            found: format!("{}x{}", mask.width(), mask.height()),
        });
    }
    Ok(())
}

/// Zeroes every pixel below `t`.
pub fn apply_hard_threshold(img: &Angiogram, t: f64) -> Angiogram {
    let values: Vec<f64> = img
        .pixels()
        .iter()
        .map(|&v| if (v as f64) < t { 0.0 } else { v as f64 })
        .collect();
    img.with_values(&values)
        .expect("thresholding keeps values in range")
}

/// Default adaptive window: `2 * floor(min(w, h) / 16) + 1`, at least 3.
pub fn default_window(width: usize, height: usize) -> usize {
    (2 * (width.min(height) / 16) + 1).max(3)
}

/// Local-mean adaptive binarization.
///
/// A pixel is foreground iff `value > local_mean * (1 + (0.5 - sensitivity))`, where the
/// local mean is a `window x window` box average with replicated borders.
pub fn binarize_adaptive(img: &Angiogram, sensitivity: f64, window: Option<usize>) -> Result<Mask> {
    let window = window.unwrap_or_else(|| default_window(img.width(), img.height()));
    ensure!(
        window >= 3 && window % 2 == 1,
        InvalidParameter,
        "adaptive window must be odd and at least 3, got {window}"
    );
    ensure!(
        (0.0..=1.0).contains(&sensitivity),
        InvalidParameter,
        "sensitivity must lie in [0, 1], got {sensitivity}"
    );
    let values = img.to_f64();
    let local = filter::box_mean(&values, img.width(), img.height(), window);
    let factor = 1.0 + (0.5 - sensitivity);
    let data = values
        .iter()
        .zip(&local)
        .map(|(v, m)| *v > m * factor)
        .collect();
    Mask::from_vec(img.width(), img.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn grid(w: usize, h: usize) -> Grid {
        Grid {
            width: w,
            height: h,
            spacing_um: 1.0,
            origin_um: [0.0, 0.0],
        }
    }

    #[test]
    fn threshold_of_three_values() {
        // pixel values 0, 0.2, 0.4 stand in for {0, 2, 4} scaled by 0.1
        let img = Angiogram::from_fn(grid(3, 2), "x", |x, y| if y == 0 { x as f64 * 0.2 } else { 1.0 })
            .unwrap();
        let mask = Mask::from_fn(3, 2, |_, y| y == 0);
        let t = faz_threshold(&img, &mask).unwrap();
        assert!((t - 0.6).abs() < 1e-7);
    }

    #[test]
    fn threshold_of_constant_region_is_the_constant() {
        let img = Angiogram::constant(grid(4, 4), 0.25, "x").unwrap();
        let mask = Mask::from_fn(4, 4, |x, _| x < 2);
        assert!((faz_threshold(&img, &mask).unwrap() - 0.25).abs() < 1e-7);
    }

    #[test]
    fn threshold_errors() {
        let img = Angiogram::constant(grid(4, 4), 0.25, "x").unwrap();
        let single = Mask::from_fn(4, 4, |x, y| x == 0 && y == 0);
        assert!(matches!(faz_threshold(&img, &single), Err(Error::Degenerate(_))));
        assert!(faz_threshold(&img, &Mask::new(4, 4)).is_err());
        assert!(matches!(
            faz_threshold(&img, &Mask::new(3, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn threshold_is_translation_equivariant() {
        let base = Angiogram::from_fn(grid(8, 8), "x", |x, y| ((x * 3 + y * 5) % 7) as f64 / 20.0)
            .unwrap();
        let shifted = Angiogram::from_fn(grid(8, 8), "x", |x, y| base.get(x, y) as f64 + 0.5).unwrap();
        let mask = Mask::from_fn(8, 8, |x, y| x > 2 && y < 5);
        let (a, b) = (
            faz_threshold(&base, &mask).unwrap(),
            faz_threshold(&shifted, &mask).unwrap(),
        );
        assert!((b - a - 0.5).abs() < 1e-6);
    }

    #[test]
    fn hard_threshold_cases() {
        let img = Angiogram::from_fn(grid(2, 2), "x", |x, _| if x == 0 { 0.2 } else { 0.6 }).unwrap();
        assert_eq!(apply_hard_threshold(&img, 0.0), img);
        assert!(apply_hard_threshold(&img, 1.0 + 1e-9).pixels().iter().all(|&v| v == 0.0));
        let out = apply_hard_threshold(&img, 0.5);
        assert_eq!(out.pixels(), &[0.0, 0.6, 0.0, 0.6]);
    }

    #[test]
    fn constant_image_binarizes_to_background() {
        let img = Angiogram::constant(grid(40, 40), 0.4, "x").unwrap();
        assert!(binarize_adaptive(&img, 0.5, None).unwrap().is_empty());
    }

    #[test]
    fn stripe_is_foreground() {
        let img = Angiogram::from_fn(grid(40, 40), "x", |_, y| {
            if (19..22).contains(&y) { 0.9 } else { 0.1 }
        })
        .unwrap();
        let mask = binarize_adaptive(&img, 0.5, Some(15)).unwrap();
        // oracle: direct local mean at a stripe pixel and a far field pixel
        let local = |x: usize, y: usize| {
            let mut s = 0.0;
            for yy in y as isize - 7..=y as isize + 7 {
                for xx in x as isize - 7..=x as isize + 7 {
                    let (cx, cy) = (xx.clamp(0, 39) as usize, yy.clamp(0, 39) as usize);
                    s += img.get(cx, cy) as f64;
                }
            }
            s / 225.0
        };
        assert!(img.get(20, 20) as f64 > local(20, 20));
        assert!((img.get(20, 5) as f64) <= local(20, 5));
        for y in 0..40 {
            for x in 0..40 {
                assert_eq!(mask.get(x, y), (19..22).contains(&y), "({x}, {y})");
            }
        }
    }

    #[test]
    fn higher_sensitivity_is_superset() {
        let img = Angiogram::from_fn(grid(33, 29), "x", |x, y| {
            (((x * 7919 + y * 104729) % 1013) as f64 / 1012.0).powi(2)
        })
        .unwrap();
        let mid = binarize_adaptive(&img, 0.5, None).unwrap();
        let high = binarize_adaptive(&img, 1.0, None).unwrap();
        assert!(mid.is_subset_of(&high));
        assert!(high.count() > mid.count());
    }

    #[test]
    fn window_validation() {
        let img = Angiogram::constant(grid(10, 10), 0.4, "x").unwrap();
        assert!(binarize_adaptive(&img, 0.5, Some(4)).is_err());
        assert!(binarize_adaptive(&img, 0.5, Some(1)).is_err());
        assert_eq!(default_window(245, 245), 31);
    }
}
