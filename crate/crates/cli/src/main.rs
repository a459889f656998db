use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let r = fairgraph_cli::run(std::env::args_os());
    eprint!("{}", r.stderr);
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(r.stdout.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("internal error: {e}");
            return ExitCode::from(3);
        }
    }
    ExitCode::from(r.code)
}
