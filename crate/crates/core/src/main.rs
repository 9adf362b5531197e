fn main() {
    std::process::exit(nids_core::cli::main_with_args(std::env::args_os()));
}
