fn main() {
    std::process::exit(stbc54::cli::run(std::env::args_os()));
}
