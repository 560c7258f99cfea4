fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("RECAGENT_H".into()),
        cpp_compat: true,
        documentation: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            rename_variants: cbindgen::RenameRule::ScreamingSnakeCase,
            ..Default::default()
        },
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_src(format!("{crate_dir}/src/lib.rs"))
        .with_config(config)
        .generate()
        .expect("unable to generate recagent.h")
        .write_to_file(format!("{crate_dir}/include/recagent.h"));
}
