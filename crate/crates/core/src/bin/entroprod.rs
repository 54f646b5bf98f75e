fn main() {
    std::process::exit(entroprod::cli::main(std::env::args_os()));
}
