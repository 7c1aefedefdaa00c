fn main() {
    std::process::exit(fairpay_cli::main_with(std::env::args_os()));
}
