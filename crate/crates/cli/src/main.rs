fn main() -> std::process::ExitCode {
    lightline_cli::main_with(std::env::args_os())
}
