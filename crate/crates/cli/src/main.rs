fn main() {
    std::process::exit(zcs_cli::parse_and_run(std::env::args_os()));
}
