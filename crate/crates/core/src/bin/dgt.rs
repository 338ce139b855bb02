fn main() {
    std::process::exit(dgt::cli::run(std::env::args_os()));
}
