use std::fs;
use std::path::Path;

use serde::Serialize;

use octaq_core::evaluate::{
    self, load_image_set, load_samples, run_demo, write_json, EvalConfig, FazSource,
    ParameterLedger, Stat,
};
use octaq_core::flow::{caliber_discrepancy, parafoveal_snr, site_width, AnnulusSpec, CaliberSite};
use octaq_core::perceptual::{
    extract_features, feature_csv_path, perceptual_report_from_dir, Extractor, PerceptualReport,
    SetRole,
};
use octaq_core::phantom::{self, AugmentParams, DatasetConfig, DegradeParams, PhantomSpec};
use octaq_core::protocol::{
    nyquist_spacing, required_aline_rate, sampling_spacing, ScanProtocol,
};
use octaq_core::raster::{load_angiogram, save_angiogram};
use octaq_core::vessel::{self, BiomarkerReport, QuantifyParams};
use octaq_core::{Angiogram, Error, Mask, RasterFormat};

use crate::report::{emit, io_failure, read_config, usage, write_csv, CmdResult, Failure, Report};
use crate::{
    AugmentArgs, CaliberArgs, DegradeArgs, DemoArgs, EvaluateArgs, PerceptualArgs, PhantomArgs,
    ProtocolArgs, QuantifyArgs, SnrArgs,
};

fn output_format(path: &Path) -> Result<RasterFormat, Failure> {
    RasterFormat::from_path(path)
        .ok_or_else(|| usage(format!("{}: output must end in .png or .raw", path.display())))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

/// `auto` selects the default disc; anything else is a PNG mask file.
fn faz_for(spec: &str, img: &Angiogram) -> Result<(Mask, String), Failure> {
    if spec == "auto" {
        let src = FazSource::default();
        return Ok((src.mask_for("", img)?, src.describe()));
    }
    let path = Path::new(spec);
    let mask = Mask::load_png(path)?;
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Failure::Compute(Error::DimensionMismatch {
            expected: format!("{}x{} FAZ mask", img.width(), img.height()),
            found: format!("{}x{} in {}", mask.width(), mask.height(), path.display()),
        }));
    }
    Ok((mask, format!("mask:{spec}")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

#[derive(Serialize)]
struct Convention {
    name: &'static str,
    repeats: u32,
    duration_s: f64,
    rate_hz: f64,
}

#[derive(Serialize)]
struct ProtocolResult {
    spacing_um: f64,
    samples_per_line: f64,
    rate_hz: f64,
    nyquist_spacing_um: f64,
    nyquist_ok: bool,
    /// The stated two-repeat assumption and the one-repeat-per-second reading that the
    /// commonly quoted rates correspond to.
    conventions: Vec<Convention>,
}

pub fn protocol(a: &ProtocolArgs) -> CmdResult {
    let fov_um = a.fov_mm * 1000.0;
    let spacing_um = match (a.samples, a.spacing_um) {
        (Some(n), _) => sampling_spacing(fov_um, n).map_err(|e| usage(e.to_string()))?,
        (None, Some(s)) => s,
        (None, None) => return Err(usage("one of --samples or --spacing-um is required")),
    };
    let p = ScanProtocol::new(fov_um, spacing_um, a.repeats, a.duration_s)
        .map_err(|e| usage(e.to_string()))?;
    let nyquist = nyquist_spacing(a.optical_resolution_um)?;
    let convention = |name, repeats, duration_s| {
        let q = ScanProtocol { repeats, duration_s, ..p };
        Convention {
            name,
            repeats,
            duration_s,
            rate_hz: required_aline_rate(&q),
        }
    };
    let result = ProtocolResult {
        spacing_um,
        samples_per_line: p.samples_per_line(),
        rate_hz: required_aline_rate(&p),
        nyquist_spacing_um: nyquist,
        nyquist_ok: spacing_um <= nyquist,
        conventions: vec![
            convention("two-repeats", 2, a.duration_s),
            convention("one-repeat-per-second", 1, 1.0),
        ],
    };
    emit(&Report::new("protocol", a, result), None)
}

#[derive(Serialize)]
struct DatasetResult {
    manifest: String,
    train_a: usize,
    train_b: usize,
    test_a: usize,
    test_b: usize,
    truth: usize,
    dataset: DatasetConfig,
}

pub fn phantom(a: &PhantomArgs) -> CmdResult {
    let spec: PhantomSpec = a.spec.as_deref().map(read_config).transpose()?.unwrap_or_default();
    let degrade: DegradeParams = a.degrade.as_deref().map(read_config).transpose()?.unwrap_or_default();
    let augment: AugmentParams = a.augment.as_deref().map(read_config).transpose()?.unwrap_or_default();
    spec.validate().map_err(|e| usage(e.to_string()))?;
    augment.validate().map_err(|e| usage(e.to_string()))?;
    let cfg = DatasetConfig {
        spec,
        degrade,
        augment,
        format: a.format.into(),
        ..DatasetConfig::new(a.n_train, a.n_test, a.augment_factor, a.seed.seed)
    };
    let m = phantom::emit_dataset(&cfg, &a.out)?;
    let result = DatasetResult {
        manifest: a.out.join("manifest.json").display().to_string(),
        train_a: m.count("train", "A"),
        train_b: m.count("train", "B"),
        test_a: m.count("test", "A"),
        test_b: m.count("test", "B"),
        truth: m.truth.len(),
        dataset: cfg,
    };
    emit(&Report::new("phantom", a, result), None)
}

#[derive(Serialize)]
struct ImageResult {
    output: String,
    width: usize,
    height: usize,
    spacing_um: f64,
    provenance: String,
}

impl ImageResult {
    fn of(path: &Path, img: &Angiogram) -> Self {
        Self {
            output: path.display().to_string(),
            width: img.width(),
            height: img.height(),
            spacing_um: img.spacing_um(),
            provenance: img.provenance().to_string(),
        }
    }
}

pub fn degrade(a: &DegradeArgs) -> CmdResult {
    let format = output_format(&a.out)?;
    let img = load_angiogram(&a.input)?;
    let p = DegradeParams {
        coarse_spacing_um: a.coarse_spacing_um,
        psf_sigma_um: a.psf_sigma_um,
        speckle_sigma: a.speckle_sigma,
    };
    let out = phantom::degrade(&img, &p, a.seed.seed)?;
    save_angiogram(&out, &a.out, format)?;
    emit(&Report::new("degrade", a, ImageResult::of(&a.out, &out)), None)
}

#[derive(Serialize)]
struct AugmentResult {
    params: AugmentParams,
    #[serde(flatten)]
    image: ImageResult,
}

pub fn augment(a: &AugmentArgs) -> CmdResult {
    let format = output_format(&a.out)?;
    let params: AugmentParams = a.params.as_deref().map(read_config).transpose()?.unwrap_or_default();
    params.validate().map_err(|e| usage(e.to_string()))?;
    let img = load_angiogram(&a.input)?;
    let out = phantom::augment(&img, &params, a.seed.seed)?;
    save_angiogram(&out, &a.out, format)?;
    let result = AugmentResult {
        params,
        image: ImageResult::of(&a.out, &out),
    };
    emit(&Report::new("augment", a, result), None)
}

#[derive(Serialize)]
struct QuantifyResult {
    faz_policy: String,
    threshold: f64,
    biomarkers: BiomarkerReport,
    ledger: ParameterLedger,
    maps: Vec<String>,
}

pub fn quantify(a: &QuantifyArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.sensitivity) {
        return Err(usage(format!("--sensitivity must lie in [0, 1], got {}", a.sensitivity)));
    }
    if a.window_px.is_some_and(|w| w % 2 == 0 || w < 3) {
        return Err(usage("--window-px must be odd and at least 3"));
    }
    let img = load_angiogram(&a.input)?;
    let (faz, faz_policy) = faz_for(&a.faz, &img)?;
    let params = QuantifyParams {
        sensitivity: a.sensitivity,
        window_px: a.window_px,
        ..QuantifyParams::default()
    };
    let q = vessel::quantify(&img, &faz, &params)?;
    let mut maps = Vec::new();
    if let Some(dir) = &a.maps_dir {
        create_dir(dir)?;
        for (name, mask) in [
            ("area", &q.maps.area),
            ("skeleton", &q.maps.skeleton),
            ("perimeter", &q.maps.perimeter),
        ] {
            let path = dir.join(format!("{name}.png"));
            mask.save_png(&path)?;
            maps.push(path.display().to_string());
        }
    }
    let result = QuantifyResult {
        faz_policy,
        threshold: q.threshold,
        biomarkers: q.report,
        ledger: ParameterLedger::new(&params, Vec::new()),
        maps,
    };
    emit(&Report::new("quantify", a, result), a.report.as_deref())
}

#[derive(Serialize)]
struct SiteResult {
    site: CaliberSite,
    width_um: Option<f64>,
    width_ref_um: Option<f64>,
    s_percent: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct CaliberResult {
    sites: Vec<SiteResult>,
    s_percent: Stat,
    ledger: ParameterLedger,
}

pub fn caliber(a: &CaliberArgs) -> CmdResult {
    let sites: Vec<CaliberSite> = read_config(&a.sites)?;
    if sites.is_empty() {
        return Err(usage(format!("{} lists no sites", a.sites.display())));
    }
    let img = load_angiogram(&a.input)?;
    let reference = load_angiogram(&a.reference)?;
    let results: Vec<SiteResult> = sites
        .into_iter()
        .map(|site| {
            let w = site_width(&img, &site);
            let r = site_width(&reference, &site);
            let error = match (&w, &r) {
                (Err(e), _) => Some(format!("input: {e}")),
                (_, Err(e)) => Some(format!("reference: {e}")),
                _ => None,
            };
            let (w, r) = (w.ok(), r.ok());
            let s_percent = match (w, r) {
                (Some(w), Some(r)) => caliber_discrepancy(w, r).ok(),
                _ => None,
            };
            SiteResult {
                site,
                width_um: w,
                width_ref_um: r,
                s_percent,
                error,
            }
        })
        .collect();
    let s = Stat::of(results.iter().filter_map(|r| r.s_percent));
    if s.n == 0 {
        return Err(Failure::Compute(Error::Degenerate(format!(
            "no site could be measured; first failure: {}",
            results[0].error.as_deref().unwrap_or("unknown")
        ))));
    }
    let result = CaliberResult {
        sites: results,
        s_percent: s,
        ledger: ParameterLedger::new(&QuantifyParams::default(), Vec::new()),
    };
    emit(&Report::new("caliber", a, result), a.report.as_deref())
}

#[derive(Serialize)]
struct SnrResult {
    snr: f64,
    faz_policy: String,
    faz_pixels: usize,
    annulus: AnnulusSpec,
    provenance: String,
}

pub fn snr(a: &SnrArgs) -> CmdResult {
    let img = load_angiogram(&a.input)?;
    let center = match &a.center_um {
        Some(c) => [c[0], c[1]],
        None => img.center_um(),
    };
    let annulus = AnnulusSpec::new(center, a.outer_um, a.inner_um).map_err(|e| usage(e.to_string()))?;
    let (faz, faz_policy) = faz_for(&a.faz, &img)?;
    let result = SnrResult {
        snr: parafoveal_snr(&img, &annulus, &faz)?,
        faz_policy,
        faz_pixels: faz.count(),
        annulus,
        provenance: img.provenance().to_string(),
    };
    emit(&Report::new("snr", a, result), a.report.as_deref())
}

#[derive(Serialize)]
struct PerceptualResult {
    perceptual: PerceptualReport,
    ledger: ParameterLedger,
}

fn check_dims(dims: &[usize]) -> CmdResult {
    if dims.is_empty() || dims.contains(&0) {
        return Err(usage("--dims must list positive dimensions"));
    }
    Ok(())
}

pub fn perceptual(a: &PerceptualArgs) -> CmdResult {
    check_dims(&a.dims)?;
    let report = match (&a.features_from, &a.orig, &a.gen, &a.reference) {
        (Some(dir), ..) => perceptual_report_from_dir(dir, &a.dims)?,
        (None, Some(o), Some(g), Some(r)) => {
            let scratch = tempfile::tempdir().map_err(|e| io_failure(&std::env::temp_dir(), e))?;
            let export = a.export_features.clone().unwrap_or_else(|| scratch.path().to_path_buf());
            for (role, dir) in [(SetRole::Original, o), (SetRole::Generated, g), (SetRole::Reference, r)] {
                let images: Vec<Angiogram> = load_image_set(dir)?.into_iter().map(|(_, img)| img).collect();
                create_dir(&export.join(role.name()))?;
                for &d in &a.dims {
                    let f = extract_features(&images, &Extractor::Builtin(d))?;
                    f.write_csv(&feature_csv_path(&export, role, d))?;
                }
            }
            // CSV export is bit-exact, so the report does not depend on the round trip
            perceptual_report_from_dir(&export, &a.dims)?
        }
        _ => return Err(usage("pass --orig, --gen and --ref, or --features-from")),
    };
    if let Some(path) = &a.csv {
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                vec![r.metric.clone(), r.dim.to_string(), format!("{:?}", r.original), format!("{:?}", r.generated)]
            })
            .collect();
        write_csv(path, &["metric", "dim", "original", "generated"], &rows)?;
    }
    let result = PerceptualResult {
        ledger: ParameterLedger::new(&QuantifyParams::default(), report.extractor_ids.clone()),
        perceptual: report,
    };
    emit(&Report::new("perceptual", a, result), a.report.as_deref())
}

#[derive(Serialize)]
struct EvaluateResult {
    bundle: String,
    summary: String,
    cases: usize,
    directions: Vec<evaluate::DirectionCheck>,
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    check_dims(&a.dims)?;
    let faz = if a.faz == "auto" {
        FazSource::default()
    } else {
        FazSource::MaskDir(a.faz.clone().into())
    };
    let sites: Vec<CaliberSite> = a.sites.as_deref().map(read_config).transpose()?.unwrap_or_default();
    let cfg = EvalConfig {
        dims: a.dims.clone(),
        faz_policy: faz.describe(),
        features_from: a.features_from.clone(),
        ..EvalConfig::default()
    };
    let original = load_samples(&a.orig, &faz)?;
    let generated = load_samples(&a.gen, &faz)?;
    let reference = load_samples(&a.reference, &faz)?;
    let bundle = evaluate::evaluate(&original, &generated, &reference, &sites, &cfg)?;

    create_dir(&a.out)?;
    let bundle_path = a.out.join("bundle.json");
    let summary_path = a.out.join("summary.txt");
    write_json(&bundle_path, &Report::new("evaluate", a, &bundle))?;
    fs::write(&summary_path, bundle.summary()).map_err(|e| io_failure(&summary_path, e))?;
    if let Some(path) = &a.csv {
        let rows: Vec<Vec<String>> = bundle
            .biomarkers
            .iter()
            .chain([&bundle.snr])
            .map(|r| {
                let mut row = vec![r.metric.clone()];
                for s in [&r.original, &r.generated, &r.reference] {
                    row.extend([fmt_opt(s.mean), fmt_opt(s.std), s.n.to_string()]);
                }
                row
            })
            .collect();
        let header = [
            "metric", "original_mean", "original_std", "original_n", "generated_mean",
            "generated_std", "generated_n", "reference_mean", "reference_std", "reference_n",
        ];
        write_csv(path, &header, &rows)?;
    }
    let result = EvaluateResult {
        bundle: bundle_path.display().to_string(),
        summary: summary_path.display().to_string(),
        cases: bundle.records.len(),
        directions: bundle.directions,
    };
    emit(&Report::new("evaluate", a, result), None)
}

pub fn demo(a: &DemoArgs) -> CmdResult {
    create_dir(&a.out)?;
    let bundle = run_demo(a.seed.seed, &a.out)?;
    let result = EvaluateResult {
        bundle: a.out.join("bundle.json").display().to_string(),
        summary: a.out.join("summary.txt").display().to_string(),
        cases: bundle.records.len(),
        directions: bundle.directions,
    };
    emit(&Report::new("demo", a, result), None)
}
