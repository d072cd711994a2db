//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on PATH.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("coupon_policy.h").exists());
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipped: no C compiler");
        return;
    }
    let lib = target_dir().join("libcoupon_policy_ffi.a");
    let source = manifest.join("tests/c/smoke.c");
    let out = std::env::temp_dir().join(format!("cp_smoke_{}", std::process::id()));
    if !lib.exists() {
        let st = Command::new("cc")
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&header_dir)
            .arg(&source)
            .status()
            .unwrap();
        assert!(st.success(), "header does not compile");
        eprintln!("static library not built; checked syntax only");
        return;
    }
    let st = Command::new("cc")
        .args(["-Wall", "-Werror", "-I"])
        .arg(&header_dir)
        .arg(&source)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success(), "C build failed");
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "C program exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("tau="));
}
