fn main() {
    std::process::exit(perfgen::cli::dispatch(std::env::args()));
}
