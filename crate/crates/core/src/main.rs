fn main() {
    std::process::exit(fclmqc::cli::main());
}
