fn main() {
    std::process::exit(mainstage::cli::run(std::env::args_os()));
}
