use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sroc_select::cli::run() as u8)
}
