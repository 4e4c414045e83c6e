fn main() {
    std::process::exit(aste::cli::run(std::env::args_os()));
}
