fn main() {
    std::process::exit(crane_rl::cli::run(std::env::args_os()));
}
