//! Vessel-tree construction: arcades curving toward the FAZ with asymmetric
//! cube-law branching.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A constant-caliber run of vessel.
#[derive(Debug, Clone)]
pub(crate) struct Piece {
    pub points: Vec<[f64; 2]>,
    pub caliber_um: f64,
}

/// Children thinner than this are not grown.
pub(crate) const MIN_BRANCH_CALIBER_UM: f64 = 8.0;
const STEP_UM: f64 = 4.0;

pub(crate) struct TreeParams {
    pub center: [f64; 2],
    pub fov_um: f64,
    /// No axis point may come closer than `keep_out(caliber)` to `center`.
    pub faz_radius_um: f64,
    pub spacing_um: f64,
    pub n_arcades: usize,
    pub branch_depth: u32,
    pub trunk_caliber_um: [f64; 2],
}

impl TreeParams {
    fn keep_out(&self, caliber_um: f64) -> f64 {
        // support edge at least three pixels clear of the FAZ boundary
        self.faz_radius_um + caliber_um / 2.0 + 3.0 * self.spacing_um
    }

    fn inside_bounds(&self, p: [f64; 2]) -> bool {
        let m = 60.0;
        p.iter().all(|&v| v > -m && v < self.fov_um + m)
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

pub(crate) fn grow_tree(p: &TreeParams, rng: &mut ChaCha8Rng) -> Vec<Piece> {
    let mut pieces = Vec::new();
    if p.n_arcades == 0 {
        return pieces;
    }
    let sector = TAU / p.n_arcades as f64;
    let rho0 = 0.5 * p.fov_um * 2f64.sqrt() + 80.0;
    for k in 0..p.n_arcades {
        let theta0 = k as f64 * sector + rng.random_range(-0.3..0.3) * sector;
        let sweep: f64 = rng.random_range(0.6..1.4) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let rho1 = p.faz_radius_um + rng.random_range(150.0..300.0);
        let caliber = uniform(rng, p.trunk_caliber_um);
        let length_est = (rho0 - rho1) + rho0 * sweep.abs();
        let m = (length_est / STEP_UM).ceil() as usize;
        let path: Vec<[f64; 2]> = (0..=m)
            .map(|i| {
                let t = i as f64 / m as f64;
                let rho = rho1 + (rho0 - rho1) * (1.0 - t).powi(2);
                let th = theta0 + sweep * t;
                [p.center[0] + rho * th.cos(), p.center[1] + rho * th.sin()]
            })
            .collect();
        grow_vessel(p, rng, path, caliber, 0, &mut pieces);
    }
    pieces
}

/// Walks `path`, splitting off children along the way. Each split lowers the parent's
/// caliber so that `c^3 = c_parent^3 + c_child^3` holds at the junction.
fn grow_vessel(
    p: &TreeParams,
    rng: &mut ChaCha8Rng,
    path: Vec<[f64; 2]>,
    mut caliber: f64,
    depth: u32,
    pieces: &mut Vec<Piece>,
) {
    let interval = |rng: &mut ChaCha8Rng, depth: u32| {
        let base = if depth == 0 { [250.0, 450.0] } else { [150.0, 300.0] };
        uniform(rng, base)
    };
    let mut next_branch = interval(rng, depth);
    let mut travelled = 0.0;
    let mut current = vec![path[0]];
    for w in path.windows(2) {
        travelled += dist(w[0], w[1]);
        current.push(w[1]);
        if travelled < next_branch || depth >= p.branch_depth {
            continue;
        }
        travelled = 0.0;
        next_branch = interval(rng, depth);
        let alpha = rng.random_range(0.2..0.5);
        let child_cal = caliber * f64::cbrt(alpha);
        if child_cal < MIN_BRANCH_CALIBER_UM {
            continue;
        }
        let tangent = unit(sub(w[1], w[0]));
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let angle = side * rng.random_range(35f64..75.0).to_radians();
        let child = random_walk(p, rng, w[1], rotate(tangent, angle), child_cal);
        if child.len() < 4 {
            continue;
        }
        pieces.push(Piece {
            points: std::mem::replace(&mut current, vec![w[1]]),
            caliber_um: caliber,
        });
        caliber *= f64::cbrt(1.0 - alpha);
        grow_vessel(p, rng, child, child_cal, depth + 1, pieces);
    }
    if current.len() >= 2 {
        pieces.push(Piece {
            points: current,
            caliber_um: caliber,
        });
    }
}

/// Gently curving path from `start`, ending at the FAZ keep-out ring or the image edge.
fn random_walk(
    p: &TreeParams,
    rng: &mut ChaCha8Rng,
    start: [f64; 2],
    mut dir: [f64; 2],
    caliber: f64,
) -> Vec<[f64; 2]> {
    let length = (rng.random_range(15.0..30.0) * caliber).min(800.0);
    let turn = Normal::new(0.0, 0.05).expect("valid sigma");
    let drift = rng.random_range(-0.015..0.015);
    let keep_out = p.keep_out(caliber);
    let mut pts = vec![start];
    let mut at = start;
    let steps = (length / STEP_UM) as usize;
    for _ in 0..steps {
        dir = rotate(dir, drift + turn.sample(rng));
        let next = [at[0] + STEP_UM * dir[0], at[1] + STEP_UM * dir[1]];
        if dist(next, p.center) < keep_out || !p.inside_bounds(next) {
            break;
        }
        pts.push(next);
        at = next;
    }
    pts
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

fn rotate(v: [f64; 2], a: f64) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Distance from `q` to segment `ab`, and the segment's unit direction.
pub(crate) fn segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return (dist(q, a), [1.0, 0.0]);
    }
    let t = (((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    let foot = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let n = len2.sqrt();
    (dist(q, foot), [ab[0] / n, ab[1] / n])
}

/// Points of a circle, closed.
pub(crate) fn circle(center: [f64; 2], radius: f64) -> Vec<[f64; 2]> {
    let m = ((TAU * radius / STEP_UM).ceil() as usize).max(16);
    (0..=m)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / m as f64;
            [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
        })
        .collect()
}
