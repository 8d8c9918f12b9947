fn main() {
    std::process::exit(cagnn::cli::run(std::env::args_os()));
}
