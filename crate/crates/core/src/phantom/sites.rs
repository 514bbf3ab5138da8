use rand::seq::SliceRandom;

use crate::flow::{site_width, CaliberSite};
use crate::raster::Angiogram;

use super::{rng_for, PhantomTruth};

/// Thinnest vessel a sampled site may cross. Thinner vessels fall below the coarse
/// sampling, where the measured width is mostly the blur kernel.
pub const MIN_SITE_CALIBER_UM: f64 = 15.0;

/// Minimum distance between two sites of one image, in pixels.
pub const MIN_SITE_SEPARATION_PX: f64 = 10.0;

const SITE_STREAM: u64 = 4;

/// Up to `n` seeded sites across truth centerline vessels of caliber at least
/// [`MIN_SITE_CALIBER_UM`].
///
/// Each site is the segment through a centerline pixel along the local normal, of
/// half-length `2 * caliber + 3 px`. A candidate is kept when its profile on `reference`
/// has a measurable FWHM and it is far enough from sites already kept.
pub fn sample_caliber_sites(
    truth: &PhantomTruth,
    reference: &Angiogram,
    image: &str,
    n: usize,
    seed: u64,
) -> Vec<CaliberSite> {
    let grid = reference.grid();
    let (w, h) = (reference.width() as f64, reference.height() as f64);
    let mut candidates: Vec<(usize, usize)> = truth
        .centerline
        .iter_set()
        .filter(|&(x, y)| truth.caliber_at(x, y).is_some_and(|c| c >= MIN_SITE_CALIBER_UM))
        .collect();
    candidates.shuffle(&mut rng_for(seed, SITE_STREAM));

    let mut kept: Vec<((usize, usize), CaliberSite)> = Vec::with_capacity(n);
    for (x, y) in candidates {
        if kept.len() == n {
            break;
        }
        let far = kept.iter().all(|&((kx, ky), _)| {
            let (dx, dy) = (kx as f64 - x as f64, ky as f64 - y as f64);
            dx.hypot(dy) >= MIN_SITE_SEPARATION_PX
        });
        if !far {
            continue;
        }
        let (cal, dir) = match (truth.caliber_at(x, y), truth.direction_at(x, y)) {
            (Some(c), Some(d)) => (c, d),
            _ => continue,
        };
        let half_px = 2.0 * cal / grid.spacing_um + 3.0;
        let normal = [-dir[1], dir[0]];
        let a = [x as f64 - half_px * normal[0], y as f64 - half_px * normal[1]];
        let b = [x as f64 + half_px * normal[0], y as f64 + half_px * normal[1]];
        let inside = |p: [f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= w - 1.0 && p[1] <= h - 1.0;
        if !(inside(a) && inside(b)) {
            continue;
        }
        let site = CaliberSite {
            image: image.to_string(),
            p0_um: grid.to_physical(a),
            p1_um: grid.to_physical(b),
            n_samples: None,
        };
        if site_width(reference, &site).is_ok() {
            kept.push(((x, y), site));
        }
    }
    kept.into_iter().map(|(_, s)| s).collect()
}
