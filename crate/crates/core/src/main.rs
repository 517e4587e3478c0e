fn main() {
    std::process::exit(sle_wzw::cli::run(std::env::args_os()));
}
