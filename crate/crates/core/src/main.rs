fn main() {
    std::process::exit(cqnls::cli::run_from_args(std::env::args_os()));
}
