use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dstc::presets;
use dstc_ffi::*;

fn open(cfg: &dstc::config::ScenarioConfig) -> *mut DstcExperiment {
    let src = CString::new(cfg.to_toml().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { dstc_experiment_from_toml(src.as_ptr(), &mut h) }, DstcStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = dstc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn two_state_round_trip() {
    let h = open(&presets::two_state_tabulated(0.25, 2.0, 1.0));
    unsafe {
        let mut n = 0usize;
        assert_eq!(dstc_scenario_count(h, &mut n), DstcStatus::Ok);
        assert_eq!(n, 2);

        let (mut t, mut found) = (0.0, 0);
        assert_eq!(dstc_critical_time(h, &mut t, &mut found), DstcStatus::Ok);
        assert_eq!(found, 1);
        assert!((t - 1.5).abs() < 1e-9, "{t}");

        let mut p = [0.0; 2];
        let mut stalled = -1.0;
        assert_eq!(dstc_survivor_probabilities(h, p.as_mut_ptr(), 2, &mut stalled), DstcStatus::Ok);
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12, "{p:?}");
        assert_eq!(stalled, 0.0);

        let (mut f, mut se, mut un) = ([0.0; 2], [0.0; 2], 7u64);
        assert_eq!(dstc_estimate(h, 4000, 3, f.as_mut_ptr(), se.as_mut_ptr(), 2, &mut un), DstcStatus::Ok);
        assert_eq!(un, 0);
        assert!((f[0] - 0.25).abs() < 5.0 * se[0], "{f:?} {se:?}");
        dstc_experiment_free(h);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut h = ptr::null_mut();
        let bad = CString::new("schema = \"dstc/9\"\n").unwrap();
        assert_eq!(dstc_experiment_from_toml(bad.as_ptr(), &mut h), DstcStatus::Config);
        assert!(h.is_null());
        assert!(last_error().contains("dstc/9"));

        assert_eq!(dstc_experiment_from_toml(ptr::null(), &mut h), DstcStatus::NullPointer);
        let missing = CString::new("/nonexistent/x.toml").unwrap();
        assert_eq!(dstc_experiment_load(missing.as_ptr(), &mut h), DstcStatus::Config);
        assert!(last_error().contains("x.toml"));

        let mut n = 0usize;
        assert_eq!(dstc_scenario_count(ptr::null(), &mut n), DstcStatus::NullPointer);

        let h = open(&presets::detectors(3, &[0.2, 0.3, 0.5]));
        let mut p = [0.0; 2];
        assert_eq!(dstc_survivor_probabilities(h, p.as_mut_ptr(), 2, ptr::null_mut()), DstcStatus::BufferTooSmall);
        let (mut f, mut se) = ([0.0; 3], [0.0; 3]);
        assert_eq!(dstc_estimate(h, 0, 1, f.as_mut_ptr(), se.as_mut_ptr(), 3, ptr::null_mut()), DstcStatus::Config);

        let mut sym = presets::three_state(0.25);
        for e in &mut sym.energies {
            e.value = Some(1.0);
        }
        let s = open(&sym);
        let mut q = [0.0; 3];
        assert_eq!(dstc_survivor_probabilities(s, q.as_mut_ptr(), 3, ptr::null_mut()), DstcStatus::Numerical);
        assert!(last_error().contains("dimension"));

        // A successful call clears the message.
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(dstc_path_intensity_drop(0.05, 1.0, &mut a, &mut b), DstcStatus::Ok);
        assert!(dstc_last_error_message().is_null());
        assert!(a < 1.0 && (b - (1.0 - std::f64::consts::PI / 3.0 * 0.05)).abs() < 1e-15);
        assert_eq!(dstc_path_intensity_drop(-1.0, 1.0, &mut a, &mut b), DstcStatus::Numerical);

        dstc_experiment_free(h);
        dstc_experiment_free(s);
        dstc_experiment_free(ptr::null_mut());
    }
}

#[test]
fn load_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets::detectors(3, &[0.2, 0.3, 0.5]);
    let path = dir.path().join("d.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(dstc_experiment_load(c.as_ptr(), &mut h), DstcStatus::Ok);
        let mut p = [0.0; 3];
        assert_eq!(dstc_survivor_probabilities(h, p.as_mut_ptr(), 3, ptr::null_mut()), DstcStatus::Ok);
        for (got, want) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-9, "{p:?}");
        }
        dstc_experiment_free(h);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dstc.h")).unwrap();
    for f in [
        "dstc_experiment_from_toml",
        "dstc_experiment_load",
        "dstc_experiment_free",
        "dstc_scenario_count",
        "dstc_critical_time",
        "dstc_survivor_probabilities",
        "dstc_estimate",
        "dstc_path_intensity_drop",
        "dstc_last_error_message",
        "typedef struct DstcExperiment DstcExperiment",
        "DSTC_STATUS_CONFIG = 2",
    ] {
        assert!(header.contains(f), "{f}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "dstc.h"

int main(int argc, char **argv) {
    DstcExperiment *h = NULL;
    if (dstc_experiment_load(argv[1], &h) != DSTC_STATUS_OK) {
        fprintf(stderr, "%s\n", dstc_last_error_message());
        return 1;
    }
    size_t n = 0;
    dstc_scenario_count(h, &n);
    double p[8];
    if (dstc_survivor_probabilities(h, p, 8, NULL) != DSTC_STATUS_OK) return 2;
    for (size_t k = 0; k < n; k++) printf("%.6f\n", p[k]);
    dstc_experiment_free(h);
    return 0;
}
"#;

/// Compiles a small C client against the header and the static library.
/// Skipped when no C compiler or no static archive is around.
#[test]
fn c_client_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir: PathBuf = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libdstc_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        println!("skipped: {} or cc unavailable", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("client");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = dir.path().join("d.toml");
    std::fs::write(&cfg, presets::detectors(3, &[0.2, 0.3, 0.5]).to_toml().unwrap()).unwrap();
    let run = Command::new(&bin).arg(&cfg).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8(run.stdout).unwrap(), "0.200000\n0.300000\n0.500000\n");
}
