fn main() {
    // panics are reported as JSON by `run`
    std::panic::set_hook(Box::new(|_| {}));
    std::process::exit(mmtts_cli::run(std::env::args_os()));
}
