fn main() {
    std::process::exit(hiexpl::cli::run(std::env::args_os()));
}
