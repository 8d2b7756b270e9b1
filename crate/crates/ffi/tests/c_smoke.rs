//! Compiles a small C program against the generated header, links it to the
//! shared library and runs it.

use std::env;
use std::fs;
use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "signcons.h"

int main(void) {
    const char *text =
        "x0 = [0.0, 1.0, 2.0]\n"
        "[graph]\nn = 3\nundirected = true\n"
        "edges = [[1, 2, 1.0], [2, 3, 1.0], [1, 3, 1.0]]\n"
        "[node_fns]\nall = { kind = \"sign\" }\n";
    SignconsScenario *s = NULL;
    if (signcons_scenario_from_toml(text, &s) != SIGNCONS_STATUS_OK) return 10;

    SignconsPrediction p;
    if (signcons_analyze(s, &p) != SIGNCONS_STATUS_OK) return 11;
    if (p != SIGNCONS_PREDICTION_SLIDING_POSSIBLE) return 12;

    double zero[3] = {0.0, 0.0, 0.0};
    size_t count = 0;
    signcons_filippov_vertices(s, zero, 3, NULL, 0, &count);
    if (count != 6) return 13;

    SignconsTrajectory *t = NULL;
    if (signcons_simulate(s, &t) != SIGNCONS_STATUS_OK) return 14;
    if (signcons_trajectory_len(t) < 2) return 15;
    signcons_trajectory_free(t);

    SignconsScenario *bad = NULL;
    if (signcons_scenario_from_toml("x0 = 1", &bad) != SIGNCONS_STATUS_PARSE) return 16;
    char msg[256];
    if (signcons_last_error(msg, sizeof msg) == 0 || strlen(msg) == 0) return 17;

    signcons_scenario_free(s);
    printf("ok\n");
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let exe = env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    // cargo test does not refresh the uplifted cdylib, so build it here
    let mut build = Command::new(env!("CARGO"));
    build.args(["build", "--quiet", "--lib", "-p", "signcons-ffi", "--target-dir"]);
    build.arg(lib_dir.parent().unwrap());
    if lib_dir.ends_with("release") {
        build.arg("--release");
    }
    let status = build.status().unwrap();
    assert!(status.success(), "cargo build of the shared library failed");
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    let bin = work.path().join("smoke");
    fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lsigncons_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
