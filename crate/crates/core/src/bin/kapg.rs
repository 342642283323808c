fn main() {
    std::process::exit(kapg::cli::run(std::env::args_os()));
}
