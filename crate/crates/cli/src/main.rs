fn main() {
    std::process::exit(liftnmf_cli::cli_main(std::env::args_os()));
}
