use std::process::ExitCode;

fn main() -> ExitCode {
    // die silently on a closed pipe (e.g. piped into `head`) instead of
    // panicking on the failed write
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    ExitCode::from(rdkw::cli::run_cli())
}
