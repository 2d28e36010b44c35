fn main() {
    std::process::exit(octalias::cli::run(std::env::args_os()));
}
