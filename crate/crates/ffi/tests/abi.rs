use std::ffi::{CStr, CString};
use std::ptr;

use ctdg_poison_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = cp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn small_config() -> *mut CpConfig {
    let cfg = cp_config_new();
    for (k, v) in [
        ("synth.sources", "20"),
        ("synth.destinations", "5"),
        ("synth.edges", "300"),
        ("attack.kind", "pa"),
        ("attack.p", "0.2"),
        ("attack.window", "40"),
    ] {
        assert_eq!(unsafe { cp_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()) }, CpStatus::Ok);
    }
    cfg
}

#[test]
fn graph_round_trip_through_files() {
    let cfg = small_config();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cp_graph_from_config(cfg, &mut g) }, CpStatus::Ok);
    assert_eq!(unsafe { cp_graph_num_edges(g) }, 300);

    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("g.csv").to_str().unwrap());
    assert_eq!(unsafe { cp_graph_save(g, path.as_ptr()) }, CpStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { cp_graph_load(path.as_ptr(), &mut back) }, CpStatus::Ok);
    assert_eq!(unsafe { cp_graph_num_edges(back) }, 300);
    unsafe {
        cp_graph_free(back);
        cp_graph_free(g);
        cp_config_free(cfg);
    }
}

#[test]
fn baseline_attack_is_compliant() {
    let cfg = small_config();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cp_graph_from_config(cfg, &mut g) }, CpStatus::Ok);
    let mut corrupted = ptr::null_mut();
    let mut ok = -1;
    assert_eq!(unsafe { cp_attack(cfg, g, 3, &mut corrupted, &mut ok) }, CpStatus::Ok);
    assert_eq!(ok, 1);
    let adv = unsafe { cp_graph_num_adversarial(corrupted) };
    assert!(adv > 0 && adv <= 60, "{adv}");
    assert_eq!(unsafe { cp_graph_num_edges(corrupted) }, 300 + adv);
    unsafe {
        cp_graph_free(corrupted);
        cp_graph_free(g);
        cp_config_free(cfg);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let cfg = cp_config_new();
    let st = unsafe { cp_config_set(cfg, c("model.width").as_ptr(), c("3").as_ptr()) };
    assert_eq!(st, CpStatus::InvalidArgument);
    assert!(last_error().contains("model.width"));

    assert_eq!(
        unsafe { cp_config_set(ptr::null_mut(), c("a").as_ptr(), c("b").as_ptr()) },
        CpStatus::NullPointer
    );
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { cp_graph_load(c("/no/such/file.csv").as_ptr(), &mut g) },
        CpStatus::Io
    );
    assert!(g.is_null());

    let mut corrupted = ptr::null_mut();
    let mut ok = 0;
    let mut clean = ptr::null_mut();
    assert_eq!(unsafe { cp_graph_from_config(cfg, &mut clean) }, CpStatus::Ok);
    // benchmark config has no attack
    assert_eq!(
        unsafe { cp_attack(cfg, clean, 0, &mut corrupted, &mut ok) },
        CpStatus::InvalidArgument
    );
    assert_eq!(unsafe { cp_graph_num_edges(ptr::null()) }, 0);
    unsafe {
        cp_graph_free(clean);
        cp_graph_free(ptr::null_mut());
        cp_config_free(cfg);
    }
}

#[test]
fn auroc_through_the_boundary() {
    let scores = [0.1, 0.2, 0.8, 0.9];
    let labels = [1, 1, 0, 0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { cp_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) },
        CpStatus::Ok
    );
    assert_eq!(out, 1.0);
    assert_eq!(
        unsafe { cp_auroc(scores.as_ptr(), [0, 0, 0, 0].as_ptr(), 4, &mut out) },
        CpStatus::InvalidArgument
    );
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/ctdg_poison.h");
    for f in [
        "cp_last_error_message",
        "cp_config_new",
        "cp_config_load",
        "cp_config_set",
        "cp_config_free",
        "cp_graph_from_config",
        "cp_graph_load",
        "cp_graph_save",
        "cp_graph_num_edges",
        "cp_graph_num_adversarial",
        "cp_graph_free",
        "cp_attack",
        "cp_run_pipeline",
        "cp_auroc",
        "CP_STATUS_PANIC",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}
