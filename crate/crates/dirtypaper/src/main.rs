fn main() {
    std::process::exit(dirtypaper::cli::run());
}
