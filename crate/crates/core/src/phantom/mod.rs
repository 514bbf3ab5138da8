//! Seeded synthetic angiograms with known ground truth, the low-sampling degradation,
//! training augmentations and dataset emission.
//!
//! A phantom is built in physical units on a grid whose pixel `(0, 0)` sits at the origin:
//!
//! 1. a central avascular disc (the FAZ);
//! 2. arcade trunks entering from beyond the image border and curving toward the FAZ;
//! 3. recursive asymmetric branching with `c^3 = c1^3 + c2^3` at every junction;
//! 4. a capillary mesh from the contour band of band-limited noise, plus a capillary ring
//!    hugging the FAZ border;
//! 5. anti-aliased rendering by axis distance;
//! 6. half-normal background noise with mean `noise_floor`.

mod augment;
mod dataset;
mod degrade;
mod geometry;
mod sites;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::filter;
use crate::raster::{provenance, Angiogram, Grid, Mask};

pub use augment::{augment, AugmentParams};
pub use dataset::{emit_dataset, DatasetConfig, DatasetEntry, Manifest};
pub use degrade::{degrade, DegradeParams};
pub use sites::{sample_caliber_sites, MIN_SITE_CALIBER_UM, MIN_SITE_SEPARATION_PX};

use geometry::{circle, dist, grow_tree, segment_distance, Piece, TreeParams};

/// Brightness of tree vessels and capillaries before noise.
pub const TREE_BRIGHTNESS: f64 = 1.0;
pub const CAPILLARY_BRIGHTNESS: f64 = 0.6;
/// Nominal capillary caliber; the mesh density sets the spacing of the contour band.
pub const CAPILLARY_CALIBER_UM: f64 = 9.0;
/// The perfused loop lining the FAZ: the widest, brightest capillary.
pub const FAZ_RING_CALIBER_UM: f64 = 12.0;
pub const FAZ_RING_BRIGHTNESS: f64 = 0.8;
const SUPERSAMPLE: usize = 4;
/// Centerline pixels lie within this many pixels of their axis.
const CENTERLINE_MAX_D_PX: f64 = 0.75;

/// Parameters of the synthetic scene. Ranges are `[min, max]` and sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub fov_um: f64,
    pub spacing_um: f64,
    pub faz_radius_um: [f64; 2],
    pub n_arcades: [usize; 2],
    pub branch_depth: u32,
    pub trunk_caliber_um: [f64; 2],
    /// Fraction of non-FAZ area covered by capillaries.
    pub capillary_density: f64,
    /// Mean of the background noise.
    pub noise_floor: f64,
    /// Gaussian correlation length of the background noise; 0 gives white noise.
    pub noise_grain_um: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            fov_um: 3000.0,
            spacing_um: 12.24,
            faz_radius_um: [250.0, 350.0],
            n_arcades: [4, 8],
            branch_depth: 4,
            trunk_caliber_um: [25.0, 45.0],
            capillary_density: 0.35,
            noise_floor: 0.05,
            noise_grain_um: 0.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 < r[0] && r[0] <= r[1];
        ensure!(
            self.fov_um.is_finite() && self.spacing_um.is_finite() && self.spacing_um > 0.0,
            InvalidParameter,
            "fov and spacing must be finite and positive"
        );
        ensure!(
            self.fov_um / self.spacing_um >= 16.0,
            InvalidParameter,
            "fov {} um holds fewer than 16 samples at {} um",
            self.fov_um,
            self.spacing_um
        );
        ensure!(
            range_ok(self.faz_radius_um),
            InvalidParameter,
            "faz radius range {:?} must be positive and ordered",
            self.faz_radius_um
        );
        ensure!(
            2.0 * self.faz_radius_um[1] < self.fov_um,
            InvalidParameter,
            "FAZ diameter {} um does not fit in the {} um field",
            2.0 * self.faz_radius_um[1],
            self.fov_um
        );
        ensure!(
            self.n_arcades[0] <= self.n_arcades[1] && self.n_arcades[1] <= 64,
            InvalidParameter,
            "arcade count range {:?} must be ordered and at most 64",
            self.n_arcades
        );
        ensure!(
            range_ok(self.trunk_caliber_um),
            InvalidParameter,
            "trunk caliber range {:?} must be positive and ordered",
            self.trunk_caliber_um
        );
        ensure!(self.branch_depth <= 8, InvalidParameter, "branch depth at most 8");
        ensure!(
            (0.0..=1.0).contains(&self.capillary_density),
            InvalidParameter,
            "capillary density must lie in [0, 1], got {}",
            self.capillary_density
        );
        ensure!(
            (0.0..=0.5).contains(&self.noise_floor),
            InvalidParameter,
            "noise floor must lie in [0, 0.5], got {}",
            self.noise_floor
        );
        ensure!(
            self.noise_grain_um.is_finite() && self.noise_grain_um >= 0.0,
            InvalidParameter,
            "noise grain must be non-negative"
        );
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        let n = (self.fov_um / self.spacing_um).round() as usize;
        Grid {
            width: n,
            height: n,
            spacing_um: self.spacing_um,
            origin_um: [0.0, 0.0],
        }
    }
}

/// Ground truth of one phantom.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    /// One-pixel-wide axes of the tree vessels, away from junctions and crossings.
    pub centerline: Mask,
    /// Caliber in micrometres at centerline pixels, 0 elsewhere.
    pub caliber_um: Vec<f32>,
    /// Unit axis direction at centerline pixels.
    pub direction: Vec<[f32; 2]>,
    pub faz: Mask,
    pub faz_center_um: [f64; 2],
    pub faz_radius_um: f64,
    /// Pixels with non-zero rendered vessel signal.
    pub vessel_support: Mask,
    pub n_arcades: usize,
}

impl PhantomTruth {
    pub fn caliber_at(&self, x: usize, y: usize) -> Option<f64> {
        self.centerline
            .get(x, y)
            .then(|| self.caliber_um[y * self.centerline.width() + x] as f64)
    }

    pub fn direction_at(&self, x: usize, y: usize) -> Option<[f64; 2]> {
        self.centerline.get(x, y).then(|| {
            let d = self.direction[y * self.centerline.width() + x];
            [d[0] as f64, d[1] as f64]
        })
    }
}

/// Independent random streams of one phantom.
mod stream {
    pub const GEOMETRY: u64 = 1;
    pub const CAPILLARY: u64 = 2;
    pub const NOISE: u64 = 3;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-pixel rendering state shared by the tree passes.
struct Canvas {
    grid: Grid,
    tree: Vec<f64>,
    nearest_d: Vec<f64>,
    nearest_piece: Vec<usize>,
    nearest_dir: Vec<[f64; 2]>,
}

impl Canvas {
    fn new(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            tree: vec![0.0; n],
            nearest_d: vec![f64::INFINITY; n],
            nearest_piece: vec![usize::MAX; n],
            nearest_dir: vec![[0.0; 2]; n],
        }
    }

    /// Calls `f(index, distance_px, direction)` for pixels within `reach_px` of segment `ab`.
    fn for_segment_pixels(
        grid: &Grid,
        a: [f64; 2],
        b: [f64; 2],
        reach_px: f64,
        mut f: impl FnMut(usize, f64, [f64; 2]),
    ) {
        let s = grid.spacing_um;
        let lo = |u: f64, v: f64| ((u.min(v) / s - reach_px).floor().max(0.0)) as usize;
        let hi = |u: f64, v: f64, n: usize| {
            let h = (u.max(v) / s + reach_px).ceil();
            if h < 0.0 {
                None
            } else {
                Some((h as usize).min(n - 1))
            }
        };
        let (Some(x1), Some(y1)) = (hi(a[0], b[0], grid.width), hi(a[1], b[1], grid.height)) else {
            return;
        };
        let (x0, y0) = (lo(a[0], b[0]), lo(a[1], b[1]));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let q = [x as f64 * s, y as f64 * s];
                let (d, dir) = segment_distance(q, a, b);
                let d_px = d / s;
                if d_px <= reach_px {
                    f(y * grid.width + x, d_px, dir);
                }
            }
        }
    }

    fn draw_pieces(&mut self, pieces: &[Piece]) {
        let grid = self.grid;
        for (id, piece) in pieces.iter().enumerate() {
            let r = piece.caliber_um / 2.0 / grid.spacing_um;
            for w in piece.points.windows(2) {
                Self::for_segment_pixels(&grid, w[0], w[1], r + 2.0, |i, d, dir| {
                    let v = (r + 0.5 - d).clamp(0.0, 1.0) * TREE_BRIGHTNESS;
                    self.tree[i] = self.tree[i].max(v);
                    if d < self.nearest_d[i] {
                        self.nearest_d[i] = d;
                        self.nearest_piece[i] = id;
                        self.nearest_dir[i] = dir;
                    }
                });
            }
        }
    }

    /// Pixels within `r_k + 2` px of an axis other than their nearest one, and pixels
    /// within `r + 2` px of any axis.
    fn exclusion(&self, pieces: &[Piece]) -> (Vec<bool>, Vec<bool>) {
        let grid = self.grid;
        let mut near_other = vec![false; grid.len()];
        let mut near_any = vec![false; grid.len()];
        for (id, piece) in pieces.iter().enumerate() {
            let r = piece.caliber_um / 2.0 / grid.spacing_um;
            for w in piece.points.windows(2) {
                Self::for_segment_pixels(&grid, w[0], w[1], r + 2.0, |i, _, _| {
                    near_any[i] = true;
                    if self.nearest_piece[i] != id {
                        near_other[i] = true;
                    }
                });
            }
        }
        (near_other, near_any)
    }
}

/// Generates one phantom and its ground truth. Pure in `(spec, seed)`.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<(Angiogram, PhantomTruth)> {
    spec.validate()?;
    let grid = spec.grid();
    let (w, h) = (grid.width, grid.height);
    let s = grid.spacing_um;
    let center = grid.center_um();

    let mut geo = rng_for(seed, stream::GEOMETRY);
    let faz_r = uniform(&mut geo, spec.faz_radius_um);
    let n_arcades = if spec.n_arcades[1] > spec.n_arcades[0] {
        geo.random_range(spec.n_arcades[0]..=spec.n_arcades[1])
    } else {
        spec.n_arcades[0]
    };
    let pieces = grow_tree(
        &TreeParams {
            center,
            fov_um: spec.fov_um,
            faz_radius_um: faz_r,
            spacing_um: s,
            n_arcades,
            branch_depth: spec.branch_depth,
            trunk_caliber_um: spec.trunk_caliber_um,
        },
        &mut geo,
    );

    let faz = Mask::from_fn(w, h, |x, y| {
        dist([x as f64 * s, y as f64 * s], center) <= faz_r
    });

    let mut canvas = Canvas::new(grid);
    canvas.draw_pieces(&pieces);
    let (near_other, near_tree) = canvas.exclusion(&pieces);

    let mut centerline = Mask::new(w, h);
    let mut caliber_um = vec![0.0f32; w * h];
    let mut direction = vec![[0.0f32; 2]; w * h];
    // axis distance to `id` at a signed offset, or None off that piece's reach
    let same_piece_d = |x: isize, y: isize, id: usize| -> Option<f64> {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            return Some(f64::INFINITY);
        }
        let j = y as usize * w + x as usize;
        match canvas.nearest_piece[j] {
            usize::MAX => Some(f64::INFINITY),
            k if k == id => Some(canvas.nearest_d[j]),
            _ => None,
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let id = canvas.nearest_piece[i];
            if id == usize::MAX || near_other[i] || canvas.nearest_d[i] > CENTERLINE_MAX_D_PX {
                continue;
            }
            let u = canvas.nearest_dir[i];
            let (nx, ny) = ((-u[1]).round() as isize, u[0].round() as isize);
            let (xi, yi) = (x as isize, y as isize);
            let d = canvas.nearest_d[i];
            // strict on one side, so a tie across the axis keeps exactly one pixel
            let is_min = match (
                same_piece_d(xi + nx, yi + ny, id),
                same_piece_d(xi - nx, yi - ny, id),
            ) {
                (Some(a), Some(b)) => d < a && d <= b,
                _ => false,
            };
            if is_min {
                centerline.set(x, y, true);
                caliber_um[i] = pieces[id].caliber_um as f32;
                direction[i] = [u[0] as f32, u[1] as f32];
            }
        }
    }

    let capillary = if spec.capillary_density > 0.0 {
        let eligible: Vec<bool> = (0..w * h)
            .map(|i| !faz.data()[i] && !near_tree[i])
            .collect();
        let mut cap = capillary_mesh(grid, &eligible, spec.capillary_density, seed);
        draw_faz_ring(grid, center, faz_r, &eligible, &mut cap);
        cap
    } else {
        vec![0.0; w * h]
    };

    let clean: Vec<f64> = canvas
        .tree
        .iter()
        .zip(&capillary)
        .map(|(t, c)| t.max(*c))
        .collect();
    let vessel_support = Mask::from_vec(w, h, clean.iter().map(|&v| v > 0.0).collect())?;
    let noise = background_noise(grid, spec, seed);
    let values: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
    let img = Angiogram::from_values(grid, provenance::NATIVE, &values)?;

    Ok((
        img,
        PhantomTruth {
            centerline,
            caliber_um,
            direction,
            faz,
            faz_center_um: center,
            faz_radius_um: faz_r,
            vessel_support,
            n_arcades,
        },
    ))
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Capillary coverage per pixel: the fraction of 4x4 subsamples inside the contour band
/// `|n| < t` of smoothed white noise, with `t` set so that mean coverage over `eligible`
/// pixels equals `density`.
fn capillary_mesh(grid: Grid, eligible: &[bool], density: f64, seed: u64) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    let (sw, sh) = (w * SUPERSAMPLE, h * SUPERSAMPLE);
    let mut rng = rng_for(seed, stream::CAPILLARY);
    let white: Vec<f64> = (0..sw * sh).map(|_| rng.sample(StandardNormal)).collect();
    // zero-level contours of noise smoothed at sigma have length density 1/(2 sqrt2 sigma)
    // per unit area; a band of caliber c then covers c / (2 sqrt2 sigma)
    let sigma_um = CAPILLARY_CALIBER_UM / (2.0 * std::f64::consts::SQRT_2 * density.max(1e-3));
    let sigma_sub = sigma_um / (grid.spacing_um / SUPERSAMPLE as f64);
    let field = filter::gaussian_blur(&white, sw, sh, sigma_sub);

    let owner = |a: usize, b: usize| (b / SUPERSAMPLE) * w + a / SUPERSAMPLE;
    let mut magnitudes: Vec<f64> = Vec::new();
    for b in 0..sh {
        for a in 0..sw {
            if eligible[owner(a, b)] {
                magnitudes.push(field[b * sw + a].abs());
            }
        }
    }
    let mut cov = vec![0.0; w * h];
    if magnitudes.is_empty() {
        return cov;
    }
    let t = if density >= 1.0 {
        f64::INFINITY
    } else {
        let k = ((density * magnitudes.len() as f64) as usize).min(magnitudes.len() - 1);
        *magnitudes.select_nth_unstable_by(k, f64::total_cmp).1
    };
    let per = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for b in 0..sh {
        for a in 0..sw {
            let o = owner(a, b);
            if eligible[o] && field[b * sw + a].abs() < t {
                cov[o] += CAPILLARY_BRIGHTNESS / per;
            }
        }
    }
    cov
}

/// Capillary ring whose support stops one pixel short of the FAZ pixel centers.
fn draw_faz_ring(grid: Grid, center: [f64; 2], faz_r: f64, eligible: &[bool], cap: &mut [f64]) {
    let r = FAZ_RING_CALIBER_UM / 2.0 / grid.spacing_um;
    let ring = circle(center, faz_r + (r + 0.75) * grid.spacing_um);
    for w in ring.windows(2) {
        Canvas::for_segment_pixels(&grid, w[0], w[1], r + 1.0, |i, d, _| {
            if eligible[i] {
                let v = (r + 0.5 - d).clamp(0.0, 1.0) * FAZ_RING_BRIGHTNESS;
                cap[i] = cap[i].max(v);
            }
        });
    }
}

/// Half-normal noise with mean `noise_floor`, optionally spatially correlated.
fn background_noise(grid: Grid, spec: &PhantomSpec, seed: u64) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    if spec.noise_floor == 0.0 {
        return vec![0.0; w * h];
    }
    let mut rng = rng_for(seed, stream::NOISE);
    let mut z: Vec<f64> = (0..w * h).map(|_| rng.sample(StandardNormal)).collect();
    let sigma_px = spec.noise_grain_um / grid.spacing_um;
    if sigma_px > 0.0 {
        let k = filter::gaussian_kernel(sigma_px, 4.0);
        let gain: f64 = k.iter().map(|v| v * v).sum();
        z = filter::separable(&z, w, h, &k, &k);
        z.iter_mut().for_each(|v| *v /= gain);
    }
    let scale = spec.noise_floor * (std::f64::consts::PI / 2.0).sqrt();
    z.iter().map(|v| v.abs() * scale).collect()
}
