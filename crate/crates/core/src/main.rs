fn main() -> std::process::ExitCode {
    rotpeh::cli::main_with_args(std::env::args_os())
}
