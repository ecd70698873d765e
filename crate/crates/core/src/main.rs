fn main() {
    std::process::exit(armrl::harness::cli::run(std::env::args_os()));
}
