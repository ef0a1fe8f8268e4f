fn main() {
    std::process::exit(surface_holonomy::cli::main_with(std::env::args_os()));
}
