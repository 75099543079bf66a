fn main() {
    std::process::exit(igeom::cli::main_with_args(std::env::args_os()));
}
