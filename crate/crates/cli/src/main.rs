fn main() {
    std::process::exit(ifjudge_cli::run(std::env::args_os()));
}
