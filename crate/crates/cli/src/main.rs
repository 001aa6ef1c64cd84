fn main() {
    std::process::exit(twin_cli::run(std::env::args_os()));
}
