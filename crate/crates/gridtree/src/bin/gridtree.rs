fn main() {
    std::process::exit(gridtree::cli::main_from_args(std::env::args_os()));
}
