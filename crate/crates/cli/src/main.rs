fn main() -> std::process::ExitCode {
    cogphylo_cli::run_from_env()
}
