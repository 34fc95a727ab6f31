fn main() {
    std::process::exit(toxbench_cli::run(std::env::args_os()));
}
