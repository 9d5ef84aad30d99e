fn main() {
    std::process::exit(conekit::cli::main_with_args(std::env::args_os()));
}
