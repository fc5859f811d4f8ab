fn main() {
    std::process::exit(memsgd::cli::main_with_args(std::env::args_os()));
}
