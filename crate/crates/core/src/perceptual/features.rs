//! Feature sets, the built-in random-filter extractor, and the feature CSV format.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::raster::{bilinear_clamped, Angiogram};

/// N feature vectors of a common dimension, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
    extractor_id: String,
}

impl FeatureSet {
    pub fn new(rows: Vec<Vec<f64>>, extractor_id: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        ensure!(d > 0, InvalidParameter, "feature vectors must be non-empty");
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d} features"),
                    found: format!("{} in vector {i}", r.len()),
                });
            }
            ensure!(
                r.iter().all(|v| v.is_finite()),
                InvalidParameter,
                "vector {i} has non-finite entries"
            );
            data.extend(r);
        }
        Ok(Self {
            data,
            n,
            d,
            extractor_id: extractor_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn extractor_id(&self) -> &str {
        &self.extractor_id
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Writes `extractor_id,d` on the first line, then one comma-separated row per vector.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = format!("{},{}\n", self.extractor_id, self.d);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads the CSV written by [`FeatureSet::write_csv`]. `expected_dim` rejects files of
    /// another dimensionality.
    pub fn read_csv(path: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or_else(|| Error::format(path, "empty feature file"))?
            .map_err(|e| Error::format(path, e.to_string()))?;
        if header.len() != 2 {
            return Err(Error::format(path, "first line must be `extractor_id,d`"));
        }
        let id = header[0].to_string();
        let d: usize = header[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("bad dimension {:?}", &header[1])))?;
        if let Some(exp) = expected_dim {
            if exp != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{exp} features"),
                    found: format!("{d} in {}", path.display()),
                });
            }
        }
        let mut rows = Vec::new();
        for (line, rec) in records.enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            if rec.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d} features"),
                    found: format!("{} on data row {}", rec.len(), line + 1),
                });
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format(path, format!("bad number {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::format(path, "no feature rows"));
        }
        Self::new(rows, id)
    }
}

/// Side of the square the images are resized to before filtering.
pub const BUILTIN_INPUT_SIDE: usize = 64;
/// Number of random 7x7 filters.
pub const BUILTIN_FILTERS: usize = 128;
pub const BUILTIN_KERNEL: usize = 7;
/// Pooling grid per filter response.
pub const BUILTIN_POOL: usize = 4;
/// Raw feature length before projection: filters x pool cells.
pub const BUILTIN_RAW_DIM: usize = BUILTIN_FILTERS * BUILTIN_POOL * BUILTIN_POOL;
/// Seed of the filter bank and projection. Changing it changes every built-in feature.
pub const BUILTIN_SEED: u64 = 0x0C7A_F1D0_2020;

struct Bank {
    filters: Vec<[f64; BUILTIN_KERNEL * BUILTIN_KERNEL]>,
    signs: Vec<f64>,
    row_order: Vec<usize>,
}

fn bank() -> &'static Bank {
    static BANK: OnceLock<Bank> = OnceLock::new();
    BANK.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(BUILTIN_SEED);
        let filters = (0..BUILTIN_FILTERS)
            .map(|_| {
                let mut k = [0.0; BUILTIN_KERNEL * BUILTIN_KERNEL];
                for v in k.iter_mut() {
                    *v = rng.sample::<f64, _>(StandardNormal);
                }
                let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                k.iter_mut().for_each(|v| *v /= norm);
                k
            })
            .collect();
        let signs = (0..BUILTIN_RAW_DIM)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        // Fisher-Yates over Hadamard rows
        let mut row_order: Vec<usize> = (0..BUILTIN_RAW_DIM).collect();
        for i in (1..row_order.len()).rev() {
            let j = rng.random_range(0..=i);
            row_order.swap(i, j);
        }
        Bank {
            filters,
            signs,
            row_order,
        }
    })
}

/// Identifier recorded for the built-in extractor at dimension `d`.
pub fn builtin_extractor_id(d: usize) -> String {
    format!("builtin-randconv-v1-{d}")
}

/// Which features feed the distribution statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extractor {
    /// Seeded random-filter features projected to `d` dimensions.
    Builtin(usize),
    /// Precomputed features read from a CSV file.
    Import(std::path::PathBuf),
}

/// Extracts one feature vector per image.
pub fn extract_features(images: &[Angiogram], extractor: &Extractor) -> Result<FeatureSet> {
    match extractor {
        Extractor::Builtin(d) => {
            ensure!(
                (1..=BUILTIN_RAW_DIM).contains(d),
                InvalidParameter,
                "built-in extractor supports 1..={BUILTIN_RAW_DIM} dimensions, got {d}"
            );
            let rows = images
                .par_iter()
                .map(|img| builtin_vector(img, *d))
                .collect();
            FeatureSet::new(rows, builtin_extractor_id(*d))
        }
        Extractor::Import(path) => {
            let set = FeatureSet::read_csv(path, None)?;
            if !images.is_empty() && set.len() != images.len() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} feature rows (one per image)", images.len()),
                    found: format!("{} in {}", set.len(), path.display()),
                });
            }
            Ok(set)
        }
    }
}

fn resize_bilinear(img: &Angiogram, side: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let (fx, fy) = (w as f64 / side as f64, h as f64 / side as f64);
    let mut out = Vec::with_capacity(side * side);
    for j in 0..side {
        let v = (j as f64 + 0.5) * fy - 0.5;
        for i in 0..side {
            let u = (i as f64 + 0.5) * fx - 0.5;
            out.push(bilinear_clamped(img.pixels(), w, h, u, v));
        }
    }
    out
}

fn builtin_vector(img: &Angiogram, d: usize) -> Vec<f64> {
    let bank = bank();
    let n = BUILTIN_INPUT_SIDE;
    let input = resize_bilinear(img, n);
    let r = (BUILTIN_KERNEL / 2) as isize;
    let cell = n / BUILTIN_POOL;
    let mut raw = Vec::with_capacity(BUILTIN_RAW_DIM);
    for k in &bank.filters {
        let mut pooled = [0.0f64; BUILTIN_POOL * BUILTIN_POOL];
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for ky in 0..BUILTIN_KERNEL {
                    let yy = (y as isize + ky as isize - r).clamp(0, n as isize - 1) as usize;
                    for kx in 0..BUILTIN_KERNEL {
                        let xx = (x as isize + kx as isize - r).clamp(0, n as isize - 1) as usize;
                        acc += k[ky * BUILTIN_KERNEL + kx] * input[yy * n + xx];
                    }
                }
                pooled[(y / cell) * BUILTIN_POOL + x / cell] += acc.max(0.0);
            }
        }
        raw.extend(pooled.iter().map(|v| v / (cell * cell) as f64));
    }
    project(&raw, d, bank)
}

/// Rows of `H diag(signs) / sqrt(n)` in seeded order: an orthonormal projection.
fn project(raw: &[f64], d: usize, bank: &Bank) -> Vec<f64> {
    let mut v: Vec<f64> = raw.iter().zip(&bank.signs).map(|(a, s)| a * s).collect();
    walsh_hadamard(&mut v);
    let scale = 1.0 / (raw.len() as f64).sqrt();
    bank.row_order[..d].iter().map(|&i| v[i] * scale).collect()
}

fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn image(seed: u64) -> Angiogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid {
            width: 90,
            height: 80,
            spacing_um: 12.24,
            origin_um: [0.0, 0.0],
        };
        Angiogram::from_fn(grid, "native", |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn builtin_shape_and_determinism() {
        let imgs: Vec<_> = (0..3).map(image).collect();
        let a = extract_features(&imgs, &Extractor::Builtin(64)).unwrap();
        let b = extract_features(&imgs, &Extractor::Builtin(64)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), a.dim()), (3, 64));
        assert_eq!(a.extractor_id(), "builtin-randconv-v1-64");
        assert!(extract_features(&imgs, &Extractor::Builtin(0)).is_err());
        assert!(extract_features(&imgs, &Extractor::Builtin(BUILTIN_RAW_DIM + 1)).is_err());
    }

    #[test]
    fn projection_is_orthonormal() {
        // full-dimension projection preserves norms and inner products
        let bank = bank();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..BUILTIN_RAW_DIM).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..BUILTIN_RAW_DIM).map(|_| rng.random::<f64>()).collect();
        let (px, py) = (project(&x, BUILTIN_RAW_DIM, bank), project(&y, BUILTIN_RAW_DIM, bank));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        assert!((dot(&px, &py) - dot(&x, &y)).abs() < 1e-9 * dot(&x, &y));
        // a prefix of rows is a contraction
        let p64 = project(&x, 64, bank);
        assert!(dot(&p64, &p64) <= dot(&x, &x));
        assert_eq!(&p64[..], &px[..64]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let imgs: Vec<_> = (0..4).map(image).collect();
        let set = extract_features(&imgs, &Extractor::Builtin(32)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features_32.csv");
        set.write_csv(&path).unwrap();
        let back = FeatureSet::read_csv(&path, Some(32)).unwrap();
        assert_eq!(back, set);
        let via_extractor = extract_features(&imgs, &Extractor::Import(path.clone())).unwrap();
        assert_eq!(via_extractor, set);
        assert!(matches!(
            FeatureSet::read_csv(&path, Some(64)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(extract_features(&imgs[..3], &Extractor::Import(path)).is_err());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "ext,3\n1,2,3\n1,2\n").unwrap();
        assert!(matches!(
            FeatureSet::read_csv(&path, None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(FeatureSet::new(vec![vec![1.0, 2.0], vec![1.0]], "x").is_err());
    }
}
