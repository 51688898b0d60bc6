fn main() {
    std::process::exit(anglekit_cli::run(std::env::args_os()));
}
