fn main() {
    std::process::exit(brittle::harness::cli::main(std::env::args_os()));
}
