fn main() {
    std::process::exit(causal_channels::cli::run(std::env::args_os()));
}
