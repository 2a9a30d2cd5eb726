fn main() {
    std::process::exit(cscomp::cli::main_from_env());
}
