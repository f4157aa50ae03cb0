fn main() {
    std::process::exit(clblk::cli::run_command(std::env::args_os()));
}
