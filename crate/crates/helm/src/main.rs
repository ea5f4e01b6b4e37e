fn main() {
    std::process::exit(helm::cli::run());
}
