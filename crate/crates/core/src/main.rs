fn main() {
    std::process::exit(chordweave::cli::run(std::env::args_os()));
}
