fn main() {
    std::process::exit(tauhybrid::cli::run());
}
