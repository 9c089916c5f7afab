fn main() {
    std::process::exit(qsearch::cli::main_with_args(std::env::args_os()));
}
