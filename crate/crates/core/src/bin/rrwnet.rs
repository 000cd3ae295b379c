fn main() {
    std::process::exit(rrwnet::cli::run(std::env::args_os()));
}
