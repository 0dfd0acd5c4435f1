fn main() {
    std::process::exit(kbandit::cli_io::cli_run(std::env::args_os()));
}
