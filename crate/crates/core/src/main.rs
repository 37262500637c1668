fn main() {
    std::process::exit(borderlab::cli::main_with_args(std::env::args_os()));
}
