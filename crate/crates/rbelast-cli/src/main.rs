fn main() {
    std::process::exit(rbelast_cli::run(std::env::args_os()));
}
