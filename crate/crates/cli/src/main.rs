fn main() {
    std::process::exit(crosslot_cli::run());
}
