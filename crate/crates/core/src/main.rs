fn main() {
    std::process::exit(shelfscan::cli::run(std::env::args_os()));
}
