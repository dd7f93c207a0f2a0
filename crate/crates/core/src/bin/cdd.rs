fn main() {
    std::process::exit(cdd_core::cli::run(std::env::args_os()));
}
