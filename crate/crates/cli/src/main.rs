fn main() {
    std::process::exit(chatterfree_cli::main_with_args(std::env::args_os()));
}
