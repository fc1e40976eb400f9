fn main() {
    std::process::exit(certlab::run(std::env::args_os()));
}
