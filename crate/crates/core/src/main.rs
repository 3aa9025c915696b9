fn main() {
    std::process::exit(superrad::experiments::cli_main(std::env::args_os()));
}
