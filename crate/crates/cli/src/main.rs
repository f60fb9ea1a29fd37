fn main() {
    std::process::exit(perc_cli::app::main_with_args(std::env::args_os()));
}
