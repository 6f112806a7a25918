fn main() {
    std::process::exit(hybridnet::expcli::cli_main(std::env::args_os()));
}
