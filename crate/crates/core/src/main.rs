fn main() {
    std::process::exit(homoenc::cli::main());
}
