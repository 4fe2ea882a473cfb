fn main() {
    std::process::exit(exclusion_zone::cli::main_with_args(std::env::args_os()));
}
