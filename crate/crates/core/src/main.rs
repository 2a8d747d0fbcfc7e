fn main() {
    std::process::exit(entconc::cli::main_with_args(std::env::args_os()));
}
