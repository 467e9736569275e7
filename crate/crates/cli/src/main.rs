fn main() {
    std::process::exit(underact_cli::run(std::env::args_os()));
}
