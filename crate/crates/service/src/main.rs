fn main() -> std::process::ExitCode {
    hiergrounding_service::cli::run()
}
