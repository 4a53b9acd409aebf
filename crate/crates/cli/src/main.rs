fn main() {
    std::process::exit(pafr_cli::cmd::run());
}
