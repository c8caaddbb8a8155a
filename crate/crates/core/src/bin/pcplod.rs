fn main() {
    std::process::exit(pcplod::cli::main_exit_code());
}
