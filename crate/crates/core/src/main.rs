fn main() {
    std::process::exit(leggett_lab::cli::run(std::env::args_os()));
}
