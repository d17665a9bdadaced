fn main() {
    std::process::exit(photon_extraction_cli::cli::run());
}
