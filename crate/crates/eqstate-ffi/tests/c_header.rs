//! Compile and run the C demo against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Directory holding the library artifacts: the parent of `deps/`.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(crate_dir().join("include/eqstate.h")).unwrap();
    for name in [
        "EQ_STATUS_OK",
        "typedef struct EqMap EqMap",
        "eq_last_error",
        "eq_map_from_json",
        "eq_model_new",
        "eq_model_eigendata",
        "eq_entropy",
        "eq_correlations",
        "eq_verify_json",
        "eq_string_free",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_demo_links_and_runs() {
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = artifact_dir().join("libeqstate_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("demo");
    let status = Command::new("cc")
        .arg(crate_dir().join("examples/demo.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("P = "), "{text}");
    assert!(text.contains("error = ") && text.contains("delta0"), "{text}");
}
