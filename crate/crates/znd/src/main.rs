fn main() {
    std::process::exit(znd::cli::run_cli(std::env::args_os()));
}
