#![allow(dead_code)]

pub mod stub;

use std::path::PathBuf;

use repdraft::case_model::CaseBundle;
use repdraft::pipeline::ingest_manifest;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/case")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// The two-device case bundle built from the fixture manifest.
pub fn case_bundle() -> CaseBundle {
    let outcome = ingest_manifest(&fixture("manifest.toml")).unwrap();
    assert!(!outcome.has_errors(), "{:?}", outcome.diagnostics);
    outcome.bundle
}

/// Spherical law of cosines, kept independent of the crate's haversine.
pub fn cosine_law_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
    6_371_000.0 * c.acos()
}
