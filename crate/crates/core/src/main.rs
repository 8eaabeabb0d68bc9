fn main() {
    std::process::exit(cauchy_ckp::cli::run(std::env::args_os()));
}
