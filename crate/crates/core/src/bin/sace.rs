fn main() {
    std::process::exit(sace::cli::run(std::env::args_os()));
}
