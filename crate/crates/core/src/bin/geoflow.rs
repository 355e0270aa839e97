fn main() -> std::process::ExitCode {
    geoflow::cli::run_cli(std::env::args_os())
}
