fn main() {
    std::process::exit(blossom::cli::run(std::env::args_os()));
}
