fn main() {
    std::process::exit(trifuse::cli::run());
}
