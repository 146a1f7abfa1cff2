fn main() {
    std::process::exit(pixnorm::cli::run_from_args(std::env::args_os()));
}
