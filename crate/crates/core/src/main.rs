fn main() {
    std::process::exit(pucknet::cli::run(std::env::args_os()));
}
