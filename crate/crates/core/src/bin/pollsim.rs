fn main() {
    std::process::exit(pollsim::cli::main_with_args(std::env::args_os()));
}
