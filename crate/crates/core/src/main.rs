fn main() {
    std::process::exit(layoutkit::cli::run(std::env::args_os()));
}
