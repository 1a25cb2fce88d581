fn main() {
    std::process::exit(pqflow_core::cli::main_with_args(std::env::args_os()));
}
