fn main() {
    std::process::exit(crpfb::cli::main(std::env::args_os()));
}
