fn main() {
    std::process::exit(gpvortex::cli::main_with_args(std::env::args_os()));
}
