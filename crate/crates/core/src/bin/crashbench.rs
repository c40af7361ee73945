fn main() {
    std::process::exit(crashbench::cli::main_from(std::env::args_os()));
}
