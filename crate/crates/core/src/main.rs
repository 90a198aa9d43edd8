fn main() {
    std::process::exit(minding_lab::cli::main_with_args(std::env::args_os()));
}
