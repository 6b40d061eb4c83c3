fn main() {
    std::process::exit(cwexp_cli::run(std::env::args_os()));
}
