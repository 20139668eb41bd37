fn main() {
    std::process::exit(pqlab::cli::run(std::env::args_os()));
}
