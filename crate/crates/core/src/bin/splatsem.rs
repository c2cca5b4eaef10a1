fn main() {
    std::process::exit(splatsem::cli::main_entry())
}
