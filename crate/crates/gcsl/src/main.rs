fn main() {
    std::process::exit(gcsl::cli::main_with_args(std::env::args_os()));
}
