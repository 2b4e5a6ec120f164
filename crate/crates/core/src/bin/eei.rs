fn main() {
    std::process::exit(eei_core::cli::main_with_args(std::env::args_os()));
}
