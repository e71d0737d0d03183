fn main() {
    std::process::exit(x0fiber::cli::run(std::env::args_os()));
}
