use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::raster::{save_angiogram, Angiogram, RasterFormat};

use super::{augment, degrade, generate_phantom, AugmentParams, DegradeParams, PhantomSpec};

/// Everything that determines an emitted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub spec: PhantomSpec,
    pub degrade: DegradeParams,
    pub augment: AugmentParams,
    pub n_train: usize,
    pub n_test: usize,
    /// Augmented copies per training image, on top of the original.
    pub augment_factor: usize,
    pub seed: u64,
    pub format: RasterFormat,
}

impl DatasetConfig {
    pub fn new(n_train: usize, n_test: usize, augment_factor: usize, seed: u64) -> Self {
        Self {
            spec: PhantomSpec::default(),
            degrade: DegradeParams::default(),
            augment: AugmentParams::default(),
            n_train,
            n_test,
            augment_factor,
            seed,
            format: RasterFormat::Png,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// Relative to the dataset root.
    pub path: String,
    pub split: String,
    /// `A` is the degraded domain, `B` the native one.
    pub domain: String,
    pub provenance: String,
    pub phantom_seed: u64,
    pub degrade_seed: Option<u64>,
    /// 0 for the unaugmented image.
    pub augment_index: usize,
    pub augment_seed: Option<u64>,
}

/// Ground-truth masks written for test phantoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub phantom_seed: u64,
    pub faz_mask: String,
    pub centerline_mask: String,
    pub faz_radius_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub entries: Vec<DatasetEntry>,
    pub truth: Vec<TruthEntry>,
}

impl Manifest {
    pub fn count(&self, split: &str, domain: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.split == split && e.domain == domain)
            .count()
    }
}

/// Derives well-mixed sub-seeds from the dataset seed.
pub(crate) fn mix_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.rotate_left(32);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

mod tag {
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const DEGRADE: u64 = 3;
    pub const AUGMENT_A: u64 = 4;
    pub const AUGMENT_B: u64 = 5;
}

struct Writer<'a> {
    root: &'a Path,
    format: RasterFormat,
}

impl Writer<'_> {
    fn write(&self, img: &Angiogram, dir: &str, stem: &str) -> Result<String> {
        let rel = format!("{dir}/{stem}.{}", self.format.extension());
        save_angiogram(img, &self.root.join(&rel), self.format)?;
        Ok(rel)
    }
}

/// Writes `out_dir/{trainA,trainB,testA,testB}` plus `manifest.json`.
///
/// Each training phantom contributes `1 + augment_factor` images to each domain; each
/// test phantom contributes one degraded and one native image, and its FAZ and
/// centerline masks under `truth/`.
pub fn emit_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    ensure!(
        cfg.n_train + cfg.n_test > 0,
        InvalidParameter,
        "dataset needs at least one phantom"
    );
    cfg.spec.validate()?;
    cfg.augment.validate()?;
    for dir in ["trainA", "trainB", "testA", "testB", "truth"] {
        let p: PathBuf = out_dir.join(dir);
        fs::create_dir_all(&p).map_err(|e| Error::io(p, e))?;
    }
    let writer = Writer {
        root: out_dir,
        format: cfg.format,
    };

    let train: Vec<Vec<DatasetEntry>> = (0..cfg.n_train)
        .into_par_iter()
        .map(|i| emit_train(cfg, &writer, i))
        .collect::<Result<_>>()?;
    let test: Vec<(Vec<DatasetEntry>, TruthEntry)> = (0..cfg.n_test)
        .into_par_iter()
        .map(|i| emit_test(cfg, &writer, i))
        .collect::<Result<_>>()?;

    let mut entries: Vec<DatasetEntry> = train.into_iter().flatten().collect();
    let mut truth = Vec::new();
    for (e, t) in test {
        entries.extend(e);
        truth.push(t);
    }
    let manifest = Manifest {
        config: cfg.clone(),
        entries,
        truth,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

fn emit_train(cfg: &DatasetConfig, w: &Writer, i: usize) -> Result<Vec<DatasetEntry>> {
    let seed = mix_seed(cfg.seed, tag::TRAIN, i as u64);
    let dseed = mix_seed(seed, tag::DEGRADE, 0);
    let (native, _) = generate_phantom(&cfg.spec, seed)?;
    let degraded = degrade(&native, &cfg.degrade, dseed)?;
    let mut out = Vec::with_capacity(2 * (1 + cfg.augment_factor));
    for k in 0..=cfg.augment_factor {
        for (domain, base, atag) in [("A", &degraded, tag::AUGMENT_A), ("B", &native, tag::AUGMENT_B)] {
            let aseed = (k > 0).then(|| mix_seed(seed, atag, k as u64));
            let img = match aseed {
                Some(s) => augment(base, &cfg.augment, s)?,
                None => base.clone(),
            };
            let path = w.write(&img, &format!("train{domain}"), &format!("train_{i:04}_aug{k}"))?;
            out.push(DatasetEntry {
                path,
                split: "train".into(),
                domain: domain.into(),
                provenance: img.provenance().to_string(),
                phantom_seed: seed,
                degrade_seed: (domain == "A").then_some(dseed),
                augment_index: k,
                augment_seed: aseed,
            });
        }
    }
    Ok(out)
}

fn emit_test(cfg: &DatasetConfig, w: &Writer, i: usize) -> Result<(Vec<DatasetEntry>, TruthEntry)> {
    let seed = mix_seed(cfg.seed, tag::TEST, i as u64);
    let dseed = mix_seed(seed, tag::DEGRADE, 0);
    let (native, truth) = generate_phantom(&cfg.spec, seed)?;
    let degraded = degrade(&native, &cfg.degrade, dseed)?;
    let stem = format!("test_{i:04}");
    let mut entries = Vec::with_capacity(2);
    for (domain, img) in [("A", &degraded), ("B", &native)] {
        let path = w.write(img, &format!("test{domain}"), &stem)?;
        entries.push(DatasetEntry {
            path,
            split: "test".into(),
            domain: domain.into(),
            provenance: img.provenance().to_string(),
            phantom_seed: seed,
            degrade_seed: (domain == "A").then_some(dseed),
            augment_index: 0,
            augment_seed: None,
        });
    }
    let faz_mask = format!("truth/{stem}_faz.png");
    let centerline_mask = format!("truth/{stem}_centerline.png");
    truth.faz.save_png(&w.root.join(&faz_mask))?;
    truth.centerline.save_png(&w.root.join(&centerline_mask))?;
    Ok((
        entries,
        TruthEntry {
            phantom_seed: seed,
            faz_mask,
            centerline_mask,
            faz_radius_um: truth.faz_radius_um,
        },
    ))
}
