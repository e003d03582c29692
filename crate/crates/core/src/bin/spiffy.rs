fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(spiffy::cli::run(std::env::args_os()))
}
