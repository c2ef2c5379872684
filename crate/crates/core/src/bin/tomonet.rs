fn main() {
    std::process::exit(tomonet::cli::run(std::env::args_os()));
}
