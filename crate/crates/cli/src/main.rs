fn main() {
    std::process::exit(cavsim_cli::main_with_args(std::env::args_os()));
}
