//! Compiles `tests/smoke.c` against the generated header and runs it against
//! the cdylib. Skipped when no C compiler or shared library is available.

use std::path::PathBuf;
use std::process::Command;

// Test executables live in target/<profile>/deps, next to the freshly built
// cdylib; the copy one level up is only refreshed by `cargo build`.
fn cdylib() -> Option<(PathBuf, PathBuf)> {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    [deps, deps.parent().unwrap()].iter().find_map(|dir| {
        ["libpatchsis_ffi.so", "libpatchsis_ffi.dylib"]
            .iter()
            .map(|n| dir.join(n))
            .find(|p| p.exists())
            .map(|p| (dir.to_path_buf(), p))
    })
}

#[test]
fn c_smoke_program() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let Some((dir, lib)) = cdylib() else {
        eprintln!("skipping: no cdylib next to the test executable");
        return;
    };
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = match Command::new(&cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-o")
        .arg(&exe)
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", dir.display()))
        .arg("-lm")
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: cannot run {cc}: {e}");
            return;
        }
    };
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "smoke program failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("c smoke ok"));
}
