fn main() {
    std::process::exit(sfeat::cli::run(std::env::args_os()));
}
