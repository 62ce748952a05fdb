fn main() {
    std::process::exit(archetype::cli::run(std::env::args_os()));
}
