fn main() -> std::process::ExitCode {
    solman::cli::main_with_args(std::env::args_os())
}
