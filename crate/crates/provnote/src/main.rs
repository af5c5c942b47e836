fn main() {
    std::process::exit(provnote::cli::main());
}
