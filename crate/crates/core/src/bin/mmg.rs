fn main() {
    std::process::exit(mmgame::cli::main_from_args(std::env::args_os()));
}
