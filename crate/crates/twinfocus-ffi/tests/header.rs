use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/twinfocus.h")).unwrap();
    for name in [
        "tf_last_error_message",
        "tf_medium_new",
        "tf_medium_free",
        "tf_state_double_gaussian",
        "tf_state_free",
        "tf_sum_projection",
        "tf_optimize_sum_coordinate",
        "tf_run_scenario",
        "typedef struct TfMedium TfMedium;",
        "TF_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler found; syntax check not run");
        return;
    };
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"twinfocus.h\"\nint main(void) {\n  TfMedium *m = 0;\n  TfStatus s = tf_medium_new(TF_MEDIUM_KIND_DFT, 0, 2, 2, 1e-4, 3, 3, &m);\n  tf_medium_free(m);\n  return s == TF_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
