fn main() {
    std::process::exit(csilab::cli::main_entry());
}
