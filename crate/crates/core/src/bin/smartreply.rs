fn main() -> std::process::ExitCode {
    smartreply::cli::main()
}
