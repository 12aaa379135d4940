use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/xdeepfm.h");
    fs::read_to_string(path).expect("build.rs writes include/xdeepfm.h")
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 12, "{exported:?}");
    for name in exported {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct XdfmModel XdfmModel;"));
    assert!(h.contains("XDFM_STATUS_OK = 0"));
    assert!(h.contains("XDFM_STATUS_PANIC = 9"));
}

/// `target/<profile>`, found from this test binary's location.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include "xdeepfm.h"

int main(void) {
    XdfmModel *m = NULL;
    if (xdfm_model_new("xdeepfm", 3, 12, 5, &m) != XDFM_STATUS_OK) return 10;
    size_t offsets[7] = {0, 1, 2, 3, 5, 5, 6};
    size_t ids[6] = {3, 5, 9, 4, 6, 11};
    double out[2];
    if (xdfm_model_predict(m, 2, offsets, ids, 6, out) != XDFM_STATUS_OK) return 11;
    printf("%.17g %.17g\n", out[0], out[1]);
    if (xdfm_model_new(NULL, 3, 12, 5, &m) != XDFM_STATUS_NULL_POINTER) return 12;
    if (xdfm_last_error() == NULL) return 13;
    xdfm_model_free(m);
    return 0;
}
"#;

#[test]
fn c_program_links_and_matches_rust_scores() {
    let lib_dir = profile_dir();
    assert!(
        lib_dir.join("libxdeepfm_ffi.so").is_file(),
        "shared library not found in {}",
        lib_dir.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lxdeepfm_ffi")
        .arg("-o")
        .arg(&bin)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());

    let scores: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .split_whitespace()
        .map(|s| s.parse().unwrap())
        .collect();
    let model = xdeepfm::Model::init(
        xdeepfm::ModelSpec::preset(xdeepfm::Preset::XDeepFm, 3, 12),
        xdeepfm::embedding::INIT_STD,
        5,
    )
    .unwrap();
    let expected = [
        vec![vec![3], vec![5], vec![9]],
        vec![vec![4, 6], vec![], vec![11]],
    ]
    .map(|fields| model.predict(&xdeepfm::data::Instance { label: 0, fields }).unwrap());
    assert_eq!(scores, expected);
}
