fn main() {
    std::process::exit(caflow::cli::run(std::env::args_os()));
}
