fn main() {
    std::process::exit(crm::cli::run_from(std::env::args_os()));
}
