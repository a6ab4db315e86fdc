fn main() {
    std::process::exit(ganjoint::cli::run(std::env::args_os()));
}
