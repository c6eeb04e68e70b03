fn main() {
    std::process::exit(geosieve::cli::run(std::env::args_os()));
}
