//! Compiles a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // integration-test binaries live in <target>/<profile>/deps/
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent().and_then(Path::parent).expect("profile directory").to_path_buf()
}

/// `cargo test` builds only the rlib, so build the static library into the
/// same target directory first.
fn static_library() -> PathBuf {
    let profile_dir = target_dir();
    let mut cmd = Command::new(env!("CARGO"));
    cmd.args(["build", "--quiet", "-p", "convflow-ffi", "--lib", "--target-dir"])
        .arg(profile_dir.parent().expect("target directory"));
    if profile_dir.file_name().is_some_and(|n| n == "release") {
        cmd.arg("--release");
    }
    let status = cmd.status().expect("cargo runs");
    assert!(status.success(), "building the static library failed");
    let lib = profile_dir.join("libconvflow_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    lib
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/convflow.h")).unwrap();
    for name in [
        "typedef struct ConvflowModel ConvflowModel;",
        "CONVFLOW_STATUS_OK = 0",
        "convflow_last_error_message(void)",
        "convflow_model_from_preset(",
        "convflow_model_from_config_json(",
        "convflow_model_load(",
        "convflow_model_save(",
        "convflow_model_free(",
        "size_t convflow_model_dim(",
        "convflow_model_param_count(",
        "convflow_model_get_params(",
        "convflow_model_set_params(",
        "convflow_model_forward(",
        "convflow_model_inverse(",
        "convflow_model_log_density(",
        "convflow_model_sample(",
        "convflow_model_train(",
    ] {
        assert!(header.contains(name), "header lacks `{name}`");
    }
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_library();
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler named `cc` on PATH");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).arg(tmp.path().join("model.json")).output().unwrap();
    assert!(out.status.success(), "smoke program failed: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
