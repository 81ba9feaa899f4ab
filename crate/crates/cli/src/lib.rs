//! Command-line front end: pick a built-in model, override parameters, run
//! the simulator and write trace, event and plot files.

pub mod output;
pub mod plot;
pub mod spec;

pub use output::{run, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
pub use spec::{parse_run_spec, CliError, ModelId, Parsed, RunSpec};

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_run_spec(args) {
        Ok(Parsed::Info(text)) => {
            print!("{text}");
            EXIT_OK
        }
        Ok(Parsed::Run(spec)) => run(&spec),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
