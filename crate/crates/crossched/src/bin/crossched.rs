fn main() {
    std::process::exit(crossched::cli::main_entry());
}
