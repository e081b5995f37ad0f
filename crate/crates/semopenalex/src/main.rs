fn main() {
    std::process::exit(semopenalex::cli::run());
}
