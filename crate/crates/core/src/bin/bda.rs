fn main() {
    std::process::exit(bda::harness::cli_main(std::env::args_os()));
}
