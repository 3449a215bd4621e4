use std::env;
use std::path::PathBuf;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR"));
    let out_header = crate_dir.join("include/vrdlab.h");
    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml")).unwrap_or_default();

    match cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate() {
        Ok(header) => {
            let _ = std::fs::create_dir_all(out_header.parent().expect("include dir"));
            header.write_to_file(out_header);
        }
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}
