fn main() {
    if std::env::var_os("CARGO_FEATURE_LAPACK").is_some() {
        let lib = std::env::var("HVAF_LAPACK_LIB").unwrap_or_else(|_| "lapack".into());
        println!("cargo:rustc-link-lib={lib}");
    }
    println!("cargo:rerun-if-env-changed=HVAF_LAPACK_LIB");
}
