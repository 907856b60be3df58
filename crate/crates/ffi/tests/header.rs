use std::path::Path;
use std::process::Command;

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/cdrm.h");

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(HEADER).unwrap();
    for name in [
        "cdrm_last_error",
        "cdrm_version",
        "cdrm_train_config_default",
        "cdrm_inference_config_default",
        "cdrm_toy_config_default",
        "cdrm_dataset_load_csv",
        "cdrm_dataset_gen_toy",
        "cdrm_dataset_len",
        "cdrm_dataset_free",
        "cdrm_model_train",
        "cdrm_model_load",
        "cdrm_model_save",
        "cdrm_model_free",
        "cdrm_model_dims",
        "cdrm_model_score",
        "cdrm_model_infer",
        "typedef struct CdrmModel CdrmModel",
        "typedef struct CdrmDataset CdrmDataset",
        "CDRM_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cdrm.h\"\nint main(void) {\n  CdrmInferenceConfig c = cdrm_inference_config_default();\n  CdrmModel *m = 0;\n  CdrmStatus s = cdrm_model_load(\"x\", &m);\n  return (int)s + (int)c.steps;\n}\n",
    )
    .unwrap();
    let include = Path::new(HEADER).parent().unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
