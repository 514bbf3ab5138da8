//! Feature-distribution distances between image sets: Fréchet distance of Gaussian fits
//! and unbiased cubic-kernel MMD.

mod features;
mod gaussian;
mod kid;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::raster::Angiogram;

pub use features::{
    builtin_extractor_id, extract_features, Extractor, FeatureSet, BUILTIN_FILTERS,
    BUILTIN_INPUT_SIDE, BUILTIN_KERNEL, BUILTIN_POOL, BUILTIN_RAW_DIM, BUILTIN_SEED,
};
pub use gaussian::{
    fit_gaussian, frechet_distance, frechet_distance_sets, psd_sqrt, GaussianFit,
    DISTANCE_TOL, NEG_EIG_TOL,
};
pub use kid::kid_mmd2;

/// Which image set a feature request is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRole {
    Original,
    Generated,
    Reference,
}

impl SetRole {
    pub const ALL: [SetRole; 3] = [SetRole::Original, SetRole::Generated, SetRole::Reference];

    pub fn name(self) -> &'static str {
        match self {
            SetRole::Original => "original",
            SetRole::Generated => "generated",
            SetRole::Reference => "reference",
        }
    }
}

/// One table row: a metric at one dimensionality, for both compared sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub dim: usize,
    /// Original vs reference.
    pub original: f64,
    /// Generated vs reference.
    pub generated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualReport {
    /// FID rows for every dim, then KID rows for every dim.
    pub rows: Vec<MetricRow>,
    pub extractor_ids: Vec<String>,
    pub n_original: usize,
    pub n_generated: usize,
    pub n_reference: usize,
}

impl PerceptualReport {
    pub fn get(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Report using the built-in extractor at each dimension.
pub fn perceptual_report(
    original: &[Angiogram],
    generated: &[Angiogram],
    reference: &[Angiogram],
    dims: &[usize],
) -> Result<PerceptualReport> {
    perceptual_report_with(dims, |role, d| {
        let images = match role {
            SetRole::Original => original,
            SetRole::Generated => generated,
            SetRole::Reference => reference,
        };
        extract_features(images, &Extractor::Builtin(d))
    })
}

/// `<dir>/<role>/features_<d>.csv`, the layout read by [`perceptual_report_from_dir`].
pub fn feature_csv_path(dir: &Path, role: SetRole, d: usize) -> PathBuf {
    dir.join(role.name()).join(format!("features_{d}.csv"))
}

/// Report over precomputed feature CSVs laid out as in [`feature_csv_path`].
pub fn perceptual_report_from_dir(dir: &Path, dims: &[usize]) -> Result<PerceptualReport> {
    perceptual_report_with(dims, |role, d| {
        FeatureSet::read_csv(&feature_csv_path(dir, role, d), Some(d))
    })
}

/// Report over features supplied per set and dimension, e.g. imported CSVs.
pub fn perceptual_report_with(
    dims: &[usize],
    mut features: impl FnMut(SetRole, usize) -> Result<FeatureSet>,
) -> Result<PerceptualReport> {
    ensure!(!dims.is_empty(), InvalidParameter, "no feature dimensions requested");
    let mut fid = Vec::new();
    let mut kid = Vec::new();
    let mut ids = Vec::new();
    let mut counts = [0usize; 3];
    for &d in dims {
        let mut sets = Vec::with_capacity(3);
        for (k, role) in SetRole::ALL.into_iter().enumerate() {
            let f = features(role, d)?;
            ensure!(
                f.len() >= 2,
                Degenerate,
                "FID/KID need at least 2 images per set; the {} set has {}",
                role.name(),
                f.len()
            );
            ensure!(
                f.dim() == d,
                InvalidParameter,
                "{} features have dimension {}, requested {d}",
                role.name(),
                f.dim()
            );
            counts[k] = f.len();
            if !ids.contains(&f.extractor_id().to_string()) {
                ids.push(f.extractor_id().to_string());
            }
            sets.push(f);
        }
        let (orig, gen, reference) = (&sets[0], &sets[1], &sets[2]);
        fid.push(MetricRow {
            metric: format!("FID-{d}"),
            dim: d,
            original: frechet_distance_sets(orig, reference)?,
            generated: frechet_distance_sets(gen, reference)?,
        });
        kid.push(MetricRow {
            metric: format!("KID-{d}"),
            dim: d,
            original: kid_mmd2(orig, reference)?,
            generated: kid_mmd2(gen, reference)?,
        });
    }
    fid.extend(kid);
    Ok(PerceptualReport {
        rows: fid,
        extractor_ids: ids,
        n_original: counts[0],
        n_generated: counts[1],
        n_reference: counts[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn images(seed: u64, n: usize, contrast: f64) -> Vec<Angiogram> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid {
            width: 64,
            height: 64,
            spacing_um: 10.0,
            origin_um: [0.0, 0.0],
        };
        (0..n)
            .map(|_| {
                Angiogram::from_fn(grid, "native", |_, _| contrast * rng.random::<f64>()).unwrap()
            })
            .collect()
    }

    #[test]
    fn generated_equal_to_reference_gives_zero_fid() {
        let reference = images(1, 4, 1.0);
        let original = images(2, 4, 0.5);
        let r = perceptual_report(&original, &reference, &reference, &[8, 64]).unwrap();
        for d in [8, 64] {
            let row = r.get(&format!("FID-{d}")).unwrap();
            assert!(row.generated.abs() < 1e-6);
            assert!(row.original > row.generated);
        }
    }

    #[test]
    fn shape_for_single_dim() {
        let a = images(3, 3, 1.0);
        let r = perceptual_report(&a, &a, &a, &[64]).unwrap();
        let names: Vec<_> = r.rows.iter().map(|r| r.metric.as_str()).collect();
        assert_eq!(names, ["FID-64", "KID-64"]);
        assert_eq!(r.extractor_ids, ["builtin-randconv-v1-64"]);
        assert_eq!((r.n_original, r.n_generated, r.n_reference), (3, 3, 3));
    }

    #[test]
    fn report_from_exported_features_matches_builtin() {
        let sets = [images(5, 3, 1.0), images(6, 3, 0.7), images(7, 3, 0.9)];
        let dir = tempfile::tempdir().unwrap();
        for (role, imgs) in SetRole::ALL.into_iter().zip(&sets) {
            let f = extract_features(imgs, &Extractor::Builtin(16)).unwrap();
            let path = feature_csv_path(dir.path(), role, 16);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            f.write_csv(&path).unwrap();
        }
        let imported = perceptual_report_from_dir(dir.path(), &[16]).unwrap();
        let direct = perceptual_report(&sets[0], &sets[1], &sets[2], &[16]).unwrap();
        assert_eq!(imported, direct);
        assert!(perceptual_report_from_dir(dir.path(), &[32]).is_err());
    }

    #[test]
    fn single_image_set_is_rejected() {
        let a = images(4, 3, 1.0);
        let err = perceptual_report(&a[..1], &a, &a, &[64]).unwrap_err();
        assert!(err.to_string().contains("at least 2 images"), "{err}");
    }
}
