fn main() -> std::process::ExitCode {
    vicsek_core::cli::main()
}
