fn main() {
    std::process::exit(mmrelay_cli::app::main_with_args(std::env::args_os()));
}
