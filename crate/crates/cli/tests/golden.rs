//! The files under `samples/golden` were produced by
//! `piperecon all --scene samples/scene.json --format xyz --stages base,+elong+smooth --jobs 1`.
//! These tests keep them readable and in step with the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use piperecon::io::{GroundTruthFile, Manifest, ModelFile};
use piperecon::pipeline::PipelineConfig;
use tempfile::TempDir;

fn samples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn sample_config_is_the_default() {
    let cfg: PipelineConfig = toml::from_str(&read(&samples().join("config.toml"))).unwrap();
    assert_eq!(toml::to_string(&cfg).unwrap(), toml::to_string(&PipelineConfig::default()).unwrap());
}

#[test]
fn golden_files_parse() {
    let g = samples().join("golden");
    let m = Manifest::from_json(&read(&g.join("manifest.json"))).unwrap();
    assert_eq!(m.entries.len(), 2);
    for e in &m.entries {
        let gt = GroundTruthFile::from_json(&read(&g.join(&e.ground_truth))).unwrap();
        assert_eq!(gt.id, e.id);
        for dir in ["base", "elong_smooth"] {
            let model = ModelFile::from_json(&read(&g.join("models").join(dir).join(format!("{}.model.json", e.id)))).unwrap();
            assert_eq!(model.id, e.id);
            assert!(model.spline.len() >= 2);
        }
    }
}

/// Rows of a metrics CSV as (id, stage, numeric columns).
fn rows(text: &str) -> Vec<(String, String, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let nums = (2..6).map(|i| rec[i].parse().unwrap_or(f64::NAN)).collect();
            (rec[0].to_string(), rec[1].to_string(), nums)
        })
        .collect()
}

#[test]
fn rerun_matches_golden_metrics() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let scene = samples().join("scene.json");
    let o = Command::new(env!("CARGO_BIN_EXE_piperecon"))
        .args(["all", "--scene", scene.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--format", "xyz", "--stages", "base,+elong+smooth", "--jobs", "1"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = rows(&read(&out.join("metrics.csv")));
    let want = rows(&read(&samples().join("golden/metrics.csv")));
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!((&g.0, &g.1), (&w.0, &w.1));
        for (a, b) in g.2.iter().zip(&w.2) {
            assert!((a - b).abs() < 1e-5, "{} {}: {a} vs {b}", g.0, g.1);
        }
    }
    assert_eq!(read(&out.join("manifest.json")), read(&samples().join("golden/manifest.json")));
}
