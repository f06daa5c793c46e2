fn main() {
    std::process::exit(qk::cli::run(std::env::args_os().skip(1)));
}
