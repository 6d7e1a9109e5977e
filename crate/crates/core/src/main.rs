fn main() {
    std::process::exit(mvproc::cli::run(std::env::args_os()));
}
