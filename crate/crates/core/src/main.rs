fn main() {
    std::process::exit(posaware::backtest::cli::run(std::env::args_os()));
}
