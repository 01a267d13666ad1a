fn main() {
    std::process::exit(patchsis::cli::main_with_args(std::env::args_os()));
}
