fn main() {
    std::process::exit(rotavg_cli::run());
}
