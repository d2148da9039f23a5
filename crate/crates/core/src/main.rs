use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = phev_carbon::report::run(
        std::env::args_os(),
        &mut io::stdout().lock(),
        &mut io::stderr(),
    );
    ExitCode::from(code as u8)
}
