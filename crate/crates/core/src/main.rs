fn main() {
    std::process::exit(affect_e2e::cli::run(std::env::args_os()));
}
