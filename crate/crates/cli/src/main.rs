fn main() {
    std::process::exit(adisep_cli::run(std::env::args_os()));
}
