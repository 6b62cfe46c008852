fn main() {
    std::process::exit(walker_guidance::cli::run_cli(std::env::args_os()));
}
