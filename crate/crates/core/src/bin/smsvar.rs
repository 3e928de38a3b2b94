fn main() -> std::process::ExitCode {
    smsvar::cli::main()
}
