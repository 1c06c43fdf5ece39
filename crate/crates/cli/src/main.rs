fn main() {
    std::process::exit(proxyaudit_cli::run(std::env::args_os()));
}
