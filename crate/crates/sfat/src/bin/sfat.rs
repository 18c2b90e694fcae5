fn main() {
    std::process::exit(sfat::cli::run(std::env::args()));
}
