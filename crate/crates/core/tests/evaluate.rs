use std::path::Path;

use octaq_core::evaluate::{
    evaluate, load_image_set, load_samples, run_demo, EvalConfig, FazSource, Sample, DEMO_CASES,
};
use octaq_core::phantom::{generate_phantom, PhantomSpec};
use octaq_core::raster::save_angiogram;
use octaq_core::{Angiogram, Grid, RasterFormat};

fn small_config() -> EvalConfig {
    EvalConfig {
        dims: vec![16, 64],
        ..EvalConfig::default()
    }
}

fn write_phantoms(dir: &Path, seeds: &[u64]) {
    for &seed in seeds {
        let (img, _) = generate_phantom(&PhantomSpec::default(), seed).unwrap();
        save_angiogram(&img, &dir.join(format!("p{seed:02}.raw")), RasterFormat::Raw).unwrap();
    }
}

#[test]
fn reference_as_all_three_sets_is_an_identity() {
    let dir = tempfile::tempdir().unwrap();
    write_phantoms(dir.path(), &[1, 2, 3]);
    let s = load_samples(dir.path(), &FazSource::default()).unwrap();
    let b = evaluate(&s, &s, &s, &[], &small_config()).unwrap();
    assert_eq!(b.records.len(), 3);
    for row in b.perceptual.rows.iter().filter(|r| r.metric.starts_with("FID")) {
        assert!(row.original.abs() < 1e-6 && row.generated.abs() < 1e-6, "{row:?}");
    }
    for r in b.biomarkers.iter().chain([&b.snr]) {
        assert_eq!(r.original, r.reference, "{}", r.metric);
        assert_eq!(r.generated, r.reference, "{}", r.metric);
        assert_eq!(r.reference.n, 3);
    }
    for rec in &b.records {
        assert_eq!(rec.original, rec.reference);
    }
    assert!(b.caliber.is_none());
    assert_eq!(b.ledger.extractor_ids.len(), 2);
}

#[test]
fn single_image_fails_the_perceptual_precondition() {
    let dir = tempfile::tempdir().unwrap();
    write_phantoms(dir.path(), &[4]);
    let s = load_samples(dir.path(), &FazSource::default()).unwrap();
    let err = evaluate(&s, &s, &s, &[], &small_config()).unwrap_err();
    assert!(err.to_string().contains("at least 2 images"), "{err}");
}

#[test]
fn empty_and_mixed_directories_are_rejected() {
    let empty = tempfile::tempdir().unwrap();
    assert!(load_image_set(empty.path()).is_err());

    let mixed = tempfile::tempdir().unwrap();
    let grid = |spacing_um| Grid {
        width: 8,
        height: 8,
        spacing_um,
        origin_um: [0.0, 0.0],
    };
    for (name, spacing) in [("a", 10.0), ("b", 12.0)] {
        let img = Angiogram::constant(grid(spacing), 0.5, "native").unwrap();
        save_angiogram(&img, &mixed.path().join(format!("{name}.raw")), RasterFormat::Raw).unwrap();
    }
    let err = load_image_set(mixed.path()).unwrap_err();
    assert!(err.to_string().contains("mixed spacings"), "{err}");
}

#[test]
fn unpaired_sets_are_rejected() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_phantoms(a.path(), &[1, 2]);
    write_phantoms(b.path(), &[1, 3]);
    let sa = load_samples(a.path(), &FazSource::default()).unwrap();
    let sb = load_samples(b.path(), &FazSource::default()).unwrap();
    let err = evaluate(&sa, &sb, &sa, &[], &small_config()).unwrap_err();
    assert!(err.to_string().contains("does not pair"), "{err}");
    let none: Vec<Sample> = Vec::new();
    assert!(evaluate(&none, &sa, &sa, &[], &small_config()).is_err());
}

#[test]
fn demo_writes_five_cases_and_flags_caliber_growth() {
    let dir = tempfile::tempdir().unwrap();
    let b = run_demo(7, dir.path()).unwrap();
    assert_eq!(b.records.len(), DEMO_CASES);
    assert_eq!(b.direction("VDI original > reference"), Some(true));
    for f in ["bundle.json", "summary.txt", "sites.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("[yes] VDI original > reference"), "{summary}");
    assert!(b.caliber.as_ref().is_some_and(|c| c.sites.len() == 25));
    assert_eq!(b.config.faz_policy, "masks:truth");
}
