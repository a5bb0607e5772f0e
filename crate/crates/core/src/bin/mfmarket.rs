fn main() {
    std::process::exit(mfmarket::cli::run(std::env::args_os()));
}
