fn main() {
    std::process::exit(weiljet::cli::run());
}
