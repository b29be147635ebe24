fn main() {
    std::process::exit(dips_cli::main_with_args(std::env::args_os()));
}
