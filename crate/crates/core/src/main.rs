fn main() {
    std::process::exit(convflow::cli::run(std::env::args_os()));
}
