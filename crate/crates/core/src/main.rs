fn main() {
    std::process::exit(xdeepfm::cli::main_with_args(std::env::args_os()));
}
