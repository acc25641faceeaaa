fn main() {
    std::process::exit(tugwar_cli::run(std::env::args_os()));
}
