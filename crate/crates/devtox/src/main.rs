fn main() {
    std::process::exit(devtox::cli::run(std::env::args_os()));
}
