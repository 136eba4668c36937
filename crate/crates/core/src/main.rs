fn main() -> std::process::ExitCode {
    labelset_rerank::cli::main()
}
