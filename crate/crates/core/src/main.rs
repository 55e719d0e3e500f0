fn main() {
    std::process::exit(edrlab::cli::main());
}
