fn main() {
    std::process::exit(herdpipe::cli::run());
}
