use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sccd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sccd_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn graph_handles() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { sccd_graph_erdos_renyi(12, 0.5, 3, &mut g) }, SccdStatus::Ok);
    let (mut n, mut e) = (0usize, 0usize);
    assert_eq!(unsafe { sccd_graph_size(g, &mut n, &mut e) }, SccdStatus::Ok);
    assert_eq!(n, 12);
    assert!(e >= 11);
    unsafe { sccd_graph_free(g) };

    // path 0-1-2 has Laplacian spectrum {0, 1, 3}
    let edges = [0usize, 1, 1, 2];
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { sccd_graph_from_edges(3, edges.as_ptr(), 2, &mut g) }, SccdStatus::Ok);
    let mut lmax = 0.0;
    assert_eq!(unsafe { sccd_graph_lambda_max(g, &mut lmax) }, SccdStatus::Ok);
    assert!((lmax - 3.0).abs() < 1e-9);
    unsafe { sccd_graph_free(g) };
}

#[test]
fn errors_are_reported() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { sccd_graph_erdos_renyi(30, 0.0, 1, &mut g) }, SccdStatus::GraphDisconnected);
    assert!(last_error().contains("disconnected"), "{}", last_error());
    assert!(g.is_null());
    assert_eq!(unsafe { sccd_graph_lambda_max(ptr::null(), &mut 0.0) }, SccdStatus::NullPointer);
    assert!(last_error().contains("graph"));
    let edges = [0usize, 7];
    assert_eq!(unsafe { sccd_graph_from_edges(3, edges.as_ptr(), 1, &mut g) }, SccdStatus::InvalidArgument);
    unsafe {
        sccd_graph_free(ptr::null_mut());
        sccd_problem_free(ptr::null_mut());
        sccd_simulation_free(ptr::null_mut());
    }
}

#[test]
fn simulation_round_trip() {
    let mut g = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(sccd_graph_erdos_renyi(6, 0.7, 5, &mut g), SccdStatus::Ok);
        assert_eq!(sccd_problem_synthesize(SccdScenario::L2, 6, 8, 5, 0.4, 1.0, 9, &mut p), SccdStatus::Ok);
    }
    let mut obj = 0.0;
    assert_eq!(unsafe { sccd_problem_obj_star(p, &mut obj) }, SccdStatus::Ok);
    assert!(obj > 0.0);
    for variant in [SccdVariant::Dadmm, SccdVariant::Sccd, SccdVariant::Dsccd] {
        let cfg = sccd_config_default(variant, 0.3);
        assert_eq!(cfg.variant, variant);
        let mut sim = ptr::null_mut();
        assert_eq!(unsafe { sccd_simulation_new(g, p, &cfg, &mut sim) }, SccdStatus::Ok);
        let mut info = SccdRoundInfo::default();
        for k in 1..=5 {
            assert_eq!(unsafe { sccd_simulation_step(sim, &mut info) }, SccdStatus::Ok);
            assert_eq!(info.round, k);
            assert!(info.computations >= 6);
        }
        let (mut acc, mut cserr) = (0.0, 0.0);
        assert_eq!(unsafe { sccd_simulation_metrics(sim, obj, &mut acc, &mut cserr) }, SccdStatus::Ok);
        assert!(acc.is_finite() && cserr >= 0.0);
        let mut x = vec![0.0; 8];
        assert_eq!(unsafe { sccd_simulation_node_x(sim, 0, x.as_mut_ptr(), 8) }, SccdStatus::Ok);
        assert!(x.iter().any(|v| *v != 0.0));
        assert_eq!(unsafe { sccd_simulation_node_x(sim, 0, x.as_mut_ptr(), 7) }, SccdStatus::InvalidArgument);
        assert_eq!(unsafe { sccd_simulation_node_x(sim, 6, x.as_mut_ptr(), 8) }, SccdStatus::InvalidArgument);
        unsafe { sccd_simulation_free(sim) };
    }
    let mut bad = sccd_config_default(SccdVariant::Sccd, 0.3);
    bad.c = -1.0;
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { sccd_simulation_new(g, p, &bad, &mut sim) }, SccdStatus::Config);
    unsafe {
        sccd_problem_free(p);
        sccd_graph_free(g);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sccd_ffi.h")).unwrap();
    for name in [
        "sccd_last_error",
        "sccd_version",
        "sccd_graph_erdos_renyi",
        "sccd_graph_from_edges",
        "sccd_graph_free",
        "sccd_problem_synthesize",
        "sccd_problem_obj_star",
        "sccd_simulation_new",
        "sccd_simulation_step",
        "sccd_simulation_metrics",
        "sccd_simulation_node_x",
        "sccd_simulation_free",
        "typedef struct SccdSimulation SccdSimulation",
        "SCCD_STATUS_GRAPH_DISCONNECTED = 3",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a C program against the static library and header.
#[test]
fn c_program_links_and_runs() {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap().to_path_buf();
    let lib = lib_dir.join("libsccd_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "sccd_ffi.h"
int main(void) {
    SccdGraph *g = NULL;
    SccdProblem *p = NULL;
    SccdSimulation *s = NULL;
    if (sccd_graph_erdos_renyi(5, 0.8, 1, &g) != SCCD_STATUS_OK) return 1;
    if (sccd_problem_synthesize(SCCD_SCENARIO_L2, 5, 4, 3, 0.4, 1.0, 2, &p) != SCCD_STATUS_OK) return 2;
    SccdConfig cfg = sccd_config_default(SCCD_VARIANT_SCCD, 0.3);
    if (sccd_simulation_new(g, p, &cfg, &s) != SCCD_STATUS_OK) return 3;
    SccdRoundInfo info;
    for (int k = 0; k < 3; k++)
        if (sccd_simulation_step(s, &info) != SCCD_STATUS_OK) return 4;
    if (sccd_graph_lambda_max(NULL, NULL) != SCCD_STATUS_NULL_POINTER) return 5;
    printf("%zu %s\n", info.round, sccd_last_error());
    sccd_simulation_free(s);
    sccd_problem_free(p);
    sccd_graph_free(g);
    return 0;
}
"#,
    )
    .unwrap();
    let exe: PathBuf = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("3 null pointer"), "{text}");
}
