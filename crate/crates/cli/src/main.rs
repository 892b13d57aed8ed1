fn main() {
    std::process::exit(veritas::run(std::env::args_os()));
}
