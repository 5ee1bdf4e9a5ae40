fn main() {
    std::process::exit(wavelat::cli::run(std::env::args_os()));
}
