fn main() {
    std::process::exit(adaptherm::cli::main_from_args(std::env::args_os()));
}
