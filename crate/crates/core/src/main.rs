fn main() {
    std::process::exit(opgeom::cli::run(std::env::args_os()));
}
