fn main() {
    std::process::exit(edim::cli::dispatch(std::env::args_os()));
}
