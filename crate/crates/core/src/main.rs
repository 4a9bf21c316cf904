fn main() {
    std::process::exit(geoloss::cli::run(std::env::args_os()));
}
