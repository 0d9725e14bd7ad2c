fn main() {
    std::process::exit(defocus_cli::run(std::env::args_os()));
}
