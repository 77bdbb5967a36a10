use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/factorlens.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "typedef struct FlFeatureSet FlFeatureSet;",
        "typedef struct FlReport FlReport;",
        "typedef struct FlIndex FlIndex;",
        "FL_STATUS_OK = 0",
        "FL_STATUS_PANIC = 12",
        "fl_last_error_message(void)",
        "fl_feature_set_load(",
        "fl_feature_set_from_data(",
        "fl_analyze(",
        "fl_report_relative_variances(",
        "fl_report_to_json(",
        "fl_index_build(",
        "fl_index_query(",
        "fl_string_free(",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

/// Compiles and runs a C program against the header and static library.
/// Skipped when no C compiler is available.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    // target/<profile>/deps/header-xxxx → target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libfactorlens_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "factorlens.h"

int main(void) {
    const char *names[] = {"A", "B"};
    size_t levels[] = {2, 2};
    float data[] = {1, 2, 3, 5};
    FlFeatureSet *set = NULL;
    FlReport *rep = NULL;
    double r[3];
    if (fl_feature_set_from_data(2, names, levels, 1, data, 4, "toy", &set) != FL_STATUS_OK) return 1;
    if (fl_analyze(set, 0.95, &rep) != FL_STATUS_OK) return 2;
    if (fl_report_relative_variances(rep, r, 3) != FL_STATUS_OK) return 3;
    if (fabs(r[0] - 25.0 / 35.0) > 1e-12 || fabs(r[2] - 1.0 / 35.0) > 1e-12) return 4;
    if (fl_analyze(set, 7.0, &rep) != FL_STATUS_PARAM) return 5;
    printf("%.6f %.6f %.6f %s\n", r[0], r[1], r[2], fl_version());
    fl_report_free(rep);
    fl_feature_set_free(set);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("0.714286 0.257143 0.028571"), "{text}");
}
