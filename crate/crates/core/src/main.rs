fn main() {
    std::process::exit(roundgen::cli::main_with_args(std::env::args_os()));
}
