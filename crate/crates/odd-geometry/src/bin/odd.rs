fn main() {
    std::process::exit(odd_geometry::cli::run(std::env::args_os()));
}
