fn main() {
    std::process::exit(hnls_core::cli::run());
}
