fn main() {
    std::process::exit(istd_cli::run(std::env::args_os()));
}
