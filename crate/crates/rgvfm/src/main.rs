fn main() {
    std::process::exit(rgvfm::cli::main_with_args(std::env::args_os()));
}
