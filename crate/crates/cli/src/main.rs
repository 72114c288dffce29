fn main() {
    std::process::exit(gdmopt_cli::run(std::env::args_os()));
}
