use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use barkline_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = BufWriter::new(io::stdout().lock());
    let result = run(cli, &mut out).and_then(|()| out.flush().map_err(Into::into));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("barkline: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
