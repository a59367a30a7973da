fn main() {
    std::process::exit(dlfumi_cli::run(std::env::args_os()));
}
