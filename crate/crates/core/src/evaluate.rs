//! Side-by-side evaluation of an original (low-sampling), a generated (restored) and a
//! reference (high-sampling) image set, and the seeded phantom demo that exercises it.
//!
//! The three sets are paired by file stem. Every number in a bundle is computed from
//! inputs in stem order, so a bundle is a pure function of its inputs and config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::filter;
use crate::flow::{caliber_discrepancy, parafoveal_snr, site_width, AnnulusSpec, CaliberSite, PROFILE_OVERSAMPLING};
use crate::perceptual::{perceptual_report, perceptual_report_from_dir, PerceptualReport};
use crate::phantom::{
    emit_dataset, generate_phantom, sample_caliber_sites, DatasetConfig, Manifest,
};
use crate::raster::{
    load_angiogram, provenance, save_angiogram, Angiogram, Mask, RasterFormat,
};
use crate::vessel::{
    default_faz_mask, disc_mask, quantify, BiomarkerReport, FrangiParams, QuantifyParams,
    BINARIZATION_INPUT, DEFAULT_FAZ_DIAMETER_UM,
};

/// Feature dimensions reported when none are requested.
pub const DEFAULT_DIMS: [usize; 4] = [64, 192, 768, 2048];

/// One image with the FAZ mask used for its threshold and SNR.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub image: Angiogram,
    pub faz: Mask,
}

/// Where FAZ masks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FazSource {
    /// A disc of the given diameter at the image center.
    Disc(f64),
    /// `<dir>/<stem>_faz.png`, falling back to `<dir>/<stem>.png`.
    MaskDir(PathBuf),
}

impl Default for FazSource {
    fn default() -> Self {
        FazSource::Disc(DEFAULT_FAZ_DIAMETER_UM)
    }
}

impl FazSource {
    /// Short label recorded in reports. Mask directories are named by their last component
    /// so that bundles do not depend on where a dataset lives.
    pub fn describe(&self) -> String {
        match self {
            FazSource::Disc(d) => format!("disc-{d}um"),
            FazSource::MaskDir(dir) => format!(
                "masks:{}",
                dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
            ),
        }
    }

    pub fn mask_for(&self, name: &str, img: &Angiogram) -> Result<Mask> {
        let mask = match self {
            FazSource::Disc(d) if *d == DEFAULT_FAZ_DIAMETER_UM => default_faz_mask(img),
            FazSource::Disc(d) => disc_mask(img, img.center_um(), *d),
            FazSource::MaskDir(dir) => {
                let primary = dir.join(format!("{name}_faz.png"));
                let path = if primary.exists() { primary } else { dir.join(format!("{name}.png")) };
                Mask::load_png(&path)?
            }
        };
        if mask.width() != img.width() || mask.height() != img.height() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} FAZ mask for {name}", img.width(), img.height()),
                found: format!("{}x{}", mask.width(), mask.height()),
            });
        }
        Ok(mask)
    }
}

/// Loads every raster in `dir`, sorted by file name, keyed by file stem.
///
/// Fails on an empty directory, duplicate stems, or images of differing spacing.
pub fn load_image_set(dir: &Path) -> Result<Vec<(String, Angiogram)>> {
    let listing = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in listing {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && RasterFormat::from_path(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    ensure!(
        !paths.is_empty(),
        Degenerate,
        "no .png or .raw images in {}",
        dir.display()
    );
    let mut out: Vec<(String, Angiogram)> = Vec::with_capacity(paths.len());
    for path in &paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        ensure!(
            out.iter().all(|(n, _)| *n != stem),
            InvalidParameter,
            "two images named {stem} in {}",
            dir.display()
        );
        out.push((stem, load_angiogram(path)?));
    }
    let (first, img0) = &out[0];
    for (name, img) in &out[1..] {
        ensure!(
            img.spacing_um() == img0.spacing_um(),
            InvalidRaster,
            "mixed spacings in {}: {first} has {} um, {name} has {} um",
            dir.display(),
            img0.spacing_um(),
            img.spacing_um()
        );
    }
    Ok(out)
}

/// [`load_image_set`] with a FAZ mask attached to each image.
pub fn load_samples(dir: &Path, faz: &FazSource) -> Result<Vec<Sample>> {
    load_image_set(dir)?
        .into_iter()
        .map(|(name, image)| {
            let faz = faz.mask_for(&name, &image)?;
            Ok(Sample { name, image, faz })
        })
        .collect()
}

/// Everything besides the images that determines a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dims: Vec<usize>,
    pub quantify: QuantifyParams,
    pub annulus_outer_um: f64,
    pub annulus_inner_um: f64,
    pub faz_policy: String,
    /// Precomputed feature CSVs; `None` runs the built-in extractor.
    pub features_from: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dims: DEFAULT_DIMS.to_vec(),
            quantify: QuantifyParams::default(),
            annulus_outer_um: AnnulusSpec::DEFAULT_OUTER_UM,
            annulus_inner_um: AnnulusSpec::DEFAULT_INNER_UM,
            faz_policy: FazSource::default().describe(),
            features_from: None,
        }
    }
}

/// Method choices that shape the numbers, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLedger {
    pub frangi: FrangiParams,
    pub sensitivity: f64,
    pub window_px: Option<usize>,
    pub faz_threshold: String,
    pub binarization_input: String,
    pub skeleton: String,
    pub fwhm_baseline: String,
    pub profile_oversampling: f64,
    pub snr_std: String,
    pub kid_kernel: String,
    pub extractor_ids: Vec<String>,
}

impl ParameterLedger {
    pub fn new(q: &QuantifyParams, extractor_ids: Vec<String>) -> Self {
        Self {
            frangi: q.frangi,
            sensitivity: q.sensitivity,
            window_px: q.window_px,
            faz_threshold: "faz_mean + 2 * faz_sample_std".into(),
            binarization_input: BINARIZATION_INPUT.into(),
            skeleton: "zhang-suen, topology-safe".into(),
            fwhm_baseline: "profile_minimum".into(),
            profile_oversampling: PROFILE_OVERSAMPLING,
            snr_std: "sample".into(),
            kid_kernel: "(x.y / d + 1)^3, unbiased, full sets".into(),
            extractor_ids,
        }
    }
}

/// Per-image measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeasures {
    pub provenance: String,
    pub spacing_um: f64,
    pub threshold: f64,
    pub biomarkers: BiomarkerReport,
    pub snr: f64,
}

/// The three images sharing one stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub name: String,
    pub original: ImageMeasures,
    pub generated: ImageMeasures,
    pub reference: ImageMeasures,
}

/// Mean and sample standard deviation over the defined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        let mean = (n > 0).then(|| v.iter().sum::<f64>() / n as f64);
        let std = mean.filter(|_| n > 1).map(|m| {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self { mean, std, n }
    }

    fn show(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{} ± {}", sig(m), sig(s)),
            (Some(m), None) => sig(m),
            _ => "undefined".into(),
        }
    }
}

fn sig(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

/// One table row over the three sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub original: Stat,
    pub generated: Stat,
    pub reference: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site: CaliberSite,
    pub width_original_um: Option<f64>,
    pub width_generated_um: Option<f64>,
    pub width_reference_um: Option<f64>,
    /// Caliber discrepancy against the reference, percent.
    pub s_original: Option<f64>,
    pub s_generated: Option<f64>,
    /// Why a width could not be measured.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaliberSummary {
    pub sites: Vec<SiteRecord>,
    pub s_original: Stat,
    pub s_generated: Stat,
}

/// A directional comparison between set-level values; `None` when either side is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub check: String,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub config: EvalConfig,
    pub ledger: ParameterLedger,
    pub records: Vec<CaseRecord>,
    pub perceptual: PerceptualReport,
    pub biomarkers: Vec<SummaryRow>,
    pub snr: SummaryRow,
    pub caliber: Option<CaliberSummary>,
    pub directions: Vec<DirectionCheck>,
}

impl EvaluationBundle {
    pub fn direction(&self, check: &str) -> Option<bool> {
        self.directions.iter().find(|d| d.check == check).and_then(|d| d.holds)
    }

    /// Plain-text tables and direction flags.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let p = &self.perceptual;
        let _ = writeln!(s, "cases: {}", self.records.len());
        let _ = writeln!(s, "faz: {}", self.config.faz_policy);
        let _ = writeln!(s, "extractor: {}", self.ledger.extractor_ids.join(", "));
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>14} {:>14}", "metric", "original", "generated");
        for r in &p.rows {
            let _ = writeln!(s, "{:<10} {:>14} {:>14}", r.metric, sig(r.original), sig(r.generated));
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:>24} {:>24} {:>24}",
            "index", "original", "generated", "reference"
        );
        for r in self.biomarkers.iter().chain(std::iter::once(&self.snr)) {
            let _ = writeln!(
                s,
                "{:<10} {:>24} {:>24} {:>24}",
                r.metric,
                r.original.show(),
                r.generated.show(),
                r.reference.show()
            );
        }
        if let Some(c) = &self.caliber {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "caliber discrepancy S (%), {} sites: original {}, generated {}",
                c.sites.len(),
                c.s_original.show(),
                c.s_generated.show()
            );
        }
        let _ = writeln!(s);
        for d in &self.directions {
            let mark = match d.holds {
                Some(true) => "yes",
                Some(false) => "NO",
                None => "n/a",
            };
            let _ = writeln!(s, "[{mark:>3}] {}", d.check);
        }
        s
    }
}

fn measure(sample: &Sample, cfg: &EvalConfig) -> Result<ImageMeasures> {
    let img = &sample.image;
    let q = quantify(img, &sample.faz, &cfg.quantify)?;
    let annulus = AnnulusSpec::new(img.center_um(), cfg.annulus_outer_um, cfg.annulus_inner_um)?;
    let snr = parafoveal_snr(img, &annulus, &sample.faz)?;
    Ok(ImageMeasures {
        provenance: img.provenance().to_string(),
        spacing_um: img.spacing_um(),
        threshold: q.threshold,
        biomarkers: q.report,
        snr,
    })
}

fn check_sets(sets: [(&str, &[Sample]); 3]) -> Result<()> {
    for (role, set) in sets {
        ensure!(!set.is_empty(), Degenerate, "the {role} set is empty");
        let s0 = set[0].image.spacing_um();
        for x in set {
            ensure!(
                x.image.spacing_um() == s0,
                InvalidRaster,
                "mixed spacings in the {role} set: {} has {} um, {} has {s0} um",
                x.name,
                x.image.spacing_um(),
                set[0].name
            );
        }
    }
    fn names(set: &[Sample]) -> Vec<&str> {
        let mut v: Vec<&str> = set.iter().map(|s| s.name.as_str()).collect();
        v.sort_unstable();
        v
    }
    let reference = names(sets[2].1);
    ensure!(
        reference.windows(2).all(|w| w[0] != w[1]),
        InvalidParameter,
        "duplicate image names in the reference set"
    );
    for (role, set) in &sets[..2] {
        let n = names(set);
        if n != reference {
            let missing: Vec<&str> = reference.iter().filter(|r| !n.contains(r)).copied().collect();
            let extra: Vec<&str> = n.iter().filter(|r| !reference.contains(r)).copied().collect();
            return Err(Error::InvalidParameter(format!(
                "the {role} set does not pair with the reference set by name \
                 (missing {missing:?}, unmatched {extra:?})"
            )));
        }
    }
    Ok(())
}

fn sorted(set: &[Sample]) -> Vec<&Sample> {
    let mut v: Vec<&Sample> = set.iter().collect();
    v.sort_by(|a, b| a.name.cmp(&b.name));
    v
}

/// Measures every image, compares the sets, and assembles the bundle.
///
/// `sites` may name any stem of the sets; each site is measured on all three images of
/// that case. Per-image work runs on the current rayon pool.
pub fn evaluate(
    original: &[Sample],
    generated: &[Sample],
    reference: &[Sample],
    sites: &[CaliberSite],
    cfg: &EvalConfig,
) -> Result<EvaluationBundle> {
    check_sets([("original", original), ("generated", generated), ("reference", reference)])?;
    cfg.quantify.frangi.validate()?;
    let sets = [sorted(original), sorted(generated), sorted(reference)];

    let all: Vec<&Sample> = sets.iter().flatten().copied().collect();
    let measures: Vec<ImageMeasures> = all
        .par_iter()
        .map(|s| measure(s, cfg))
        .collect::<Result<_>>()?;
    let n = reference.len();
    let records: Vec<CaseRecord> = (0..n)
        .map(|i| CaseRecord {
            name: sets[2][i].name.clone(),
            original: measures[i].clone(),
            generated: measures[n + i].clone(),
            reference: measures[2 * n + i].clone(),
        })
        .collect();

    let perceptual = match &cfg.features_from {
        Some(dir) => perceptual_report_from_dir(dir, &cfg.dims)?,
        None => {
            let images = |k: usize| -> Vec<Angiogram> {
                sets[k].iter().map(|s| s.image.clone()).collect()
            };
            perceptual_report(&images(0), &images(1), &images(2), &cfg.dims)?
        }
    };

    let row = |metric: &str, f: &dyn Fn(&ImageMeasures) -> Option<f64>| SummaryRow {
        metric: metric.to_string(),
        original: Stat::of(records.iter().filter_map(|r| f(&r.original))),
        generated: Stat::of(records.iter().filter_map(|r| f(&r.generated))),
        reference: Stat::of(records.iter().filter_map(|r| f(&r.reference))),
    };
    let biomarkers: Vec<SummaryRow> = ["vdi", "vad", "vsd", "vpi", "vci"]
        .iter()
        .enumerate()
        .map(|(k, name)| row(name, &|m| m.biomarkers.indices()[k].1))
        .collect();
    let snr = row("snr", &|m| Some(m.snr));

    let caliber = if sites.is_empty() {
        None
    } else {
        Some(measure_sites(&sets, sites)?)
    };

    let mut directions = Vec::new();
    let cmp = |a: &Stat, b: &Stat, greater: bool| match (a.mean, b.mean) {
        (Some(x), Some(y)) => Some(if greater { x > y } else { x < y }),
        _ => None,
    };
    for (r, greater) in biomarkers.iter().zip([true, false, false, false, false]) {
        directions.push(DirectionCheck {
            check: format!(
                "{} original {} reference",
                r.metric.to_uppercase(),
                if greater { ">" } else { "<" }
            ),
            holds: cmp(&r.original, &r.reference, greater),
        });
    }
    directions.push(DirectionCheck {
        check: "SNR reference > original".into(),
        holds: cmp(&snr.reference, &snr.original, true),
    });
    for r in perceptual.rows.iter().filter(|r| r.metric.starts_with("FID")) {
        directions.push(DirectionCheck {
            check: format!("{} original > generated", r.metric),
            holds: Some(r.original > r.generated),
        });
    }
    if let Some(c) = &caliber {
        directions.push(DirectionCheck {
            check: "S original > generated".into(),
            holds: cmp(&c.s_original, &c.s_generated, true),
        });
    }

    Ok(EvaluationBundle {
        config: cfg.clone(),
        ledger: ParameterLedger::new(&cfg.quantify, perceptual.extractor_ids.clone()),
        records,
        perceptual,
        biomarkers,
        snr,
        caliber,
        directions,
    })
}

fn measure_sites(sets: &[Vec<&Sample>; 3], sites: &[CaliberSite]) -> Result<CaliberSummary> {
    let records: Vec<SiteRecord> = sites
        .par_iter()
        .map(|site| {
            let k = sets[2]
                .iter()
                .position(|s| s.name == site.image)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("caliber site names unknown image {:?}", site.image))
                })?;
            let widths: Vec<Result<f64>> =
                (0..3).map(|set| site_width(&sets[set][k].image, site)).collect();
            let error = widths
                .iter()
                .zip(["original", "generated", "reference"])
                .find_map(|(w, role)| w.as_ref().err().map(|e| format!("{role}: {e}")));
            let w: Vec<Option<f64>> = widths.into_iter().map(|w| w.ok()).collect();
            let s = |x: Option<f64>| match (x, w[2]) {
                (Some(a), Some(r)) => caliber_discrepancy(a, r).ok(),
                _ => None,
            };
            Ok(SiteRecord {
                site: site.clone(),
                width_original_um: w[0],
                width_generated_um: w[1],
                width_reference_um: w[2],
                s_original: s(w[0]),
                s_generated: s(w[1]),
                error,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CaliberSummary {
        s_original: Stat::of(records.iter().filter_map(|r| r.s_original)),
        s_generated: Stat::of(records.iter().filter_map(|r| r.s_generated)),
        sites: records,
    })
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Test phantoms in the demo.
pub const DEMO_CASES: usize = 5;
/// Caliber sites per demo phantom.
pub const DEMO_SITES_PER_CASE: usize = 5;
/// Gaussian blur, in native pixels, of the restoration stand-in.
pub const ORACLE_BLUR_SIGMA_PX: f64 = 0.6;
/// Directory of the restoration stand-in inside the demo dataset.
pub const DEMO_RESTORED_DIR: &str = "testR";

/// Light blur of a native image, standing in for a restoration when no generator output
/// is available.
pub fn oracle_restoration(native: &Angiogram) -> Result<Angiogram> {
    let v = filter::gaussian_blur(&native.to_f64(), native.width(), native.height(), ORACLE_BLUR_SIGMA_PX);
    Ok(native.with_values(&v)?.with_provenance(provenance::GENERATED))
}

/// Generates [`DEMO_CASES`] test phantoms under `out_dir/dataset`, writes their degraded
/// versions and oracle restorations, samples caliber sites from the truth centerlines,
/// and evaluates degraded (original) and restored (generated) against native (reference).
///
/// Writes `sites.json`, `bundle.json` and `summary.txt` into `out_dir`.
pub fn run_demo(seed: u64, out_dir: &Path) -> Result<EvaluationBundle> {
    let data = out_dir.join("dataset");
    let mut dcfg = DatasetConfig::new(0, DEMO_CASES, 0, seed);
    dcfg.format = RasterFormat::Raw;
    let manifest: Manifest = emit_dataset(&dcfg, &data)?;

    let restored_dir = data.join(DEMO_RESTORED_DIR);
    fs::create_dir_all(&restored_dir).map_err(|e| Error::io(&restored_dir, e))?;
    let native_dir = data.join("testB");
    for (name, img) in load_image_set(&native_dir)? {
        let path = restored_dir.join(format!("{name}.{}", dcfg.format.extension()));
        save_angiogram(&oracle_restoration(&img)?, &path, dcfg.format)?;
    }

    let faz = FazSource::MaskDir(data.join("truth"));
    let original = load_samples(&data.join("testA"), &faz)?;
    let generated = load_samples(&restored_dir, &faz)?;
    let reference = load_samples(&native_dir, &faz)?;

    let mut sites = Vec::new();
    for (i, t) in manifest.truth.iter().enumerate() {
        let name = format!("test_{i:04}");
        let (_, truth) = generate_phantom(&dcfg.spec, t.phantom_seed)?;
        let native = &reference
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("demo dataset lacks {name}")))?
            .image;
        sites.extend(sample_caliber_sites(&truth, native, &name, DEMO_SITES_PER_CASE, t.phantom_seed));
    }
    write_json(&out_dir.join("sites.json"), &sites)?;

    let cfg = EvalConfig {
        faz_policy: faz.describe(),
        ..EvalConfig::default()
    };
    let bundle = evaluate(&original, &generated, &reference, &sites, &cfg)?;
    write_json(&out_dir.join("bundle.json"), &bundle)?;
    let summary = out_dir.join("summary.txt");
    fs::write(&summary, bundle.summary()).map_err(|e| Error::io(&summary, e))?;
    Ok(bundle)
}
