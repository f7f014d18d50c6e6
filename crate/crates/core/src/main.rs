fn main() {
    std::process::exit(lsras::cli::main_with_args(std::env::args_os()));
}
