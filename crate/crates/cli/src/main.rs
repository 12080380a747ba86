fn main() {
    std::process::exit(gflda_cli::run(std::env::args_os()));
}
