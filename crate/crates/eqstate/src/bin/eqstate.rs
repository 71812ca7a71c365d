fn main() {
    std::process::exit(eqstate::cli::main_with_args(std::env::args_os()));
}
