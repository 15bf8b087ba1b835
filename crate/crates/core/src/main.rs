fn main() {
    std::process::exit(gridedge::cli::run(std::env::args_os()));
}
