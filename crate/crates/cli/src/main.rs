fn main() {
    std::process::exit(fiberseg_cli::run(std::env::args_os()));
}
