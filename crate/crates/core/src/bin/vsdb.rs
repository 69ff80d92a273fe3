use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let result = vsdb::cli::run(std::env::args_os(), &mut out);
    let flushed = out.flush();
    match result.and(flushed.map_err(vsdb::Error::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", vsdb::cli::error_json(&e));
            ExitCode::from(vsdb::cli::exit_code(&e) as u8)
        }
    }
}
