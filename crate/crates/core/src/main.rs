fn main() {
    std::process::exit(ddtrack::cli::run(std::env::args_os()));
}
