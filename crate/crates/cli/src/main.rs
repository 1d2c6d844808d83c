fn main() {
    std::process::exit(dnls_cli::run(std::env::args_os()));
}
