fn main() {
    std::process::exit(scalodet::cli::run(std::env::args_os()));
}
