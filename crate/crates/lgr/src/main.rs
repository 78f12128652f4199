fn main() {
    std::process::exit(lgr::cli::run());
}
