fn main() {
    std::process::exit(etherscope::cli::run());
}
