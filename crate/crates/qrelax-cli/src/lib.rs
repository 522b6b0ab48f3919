//! Experiment driver: seeded instances in, CSV traces and a manifest out.
//!
//! The binary front-end is a thin wrapper over [`config::resolve`] and
//! [`driver::execute`]; integration tests call those directly.

pub mod config;
pub mod driver;
pub mod output;

use clap::error::ErrorKind;
use clap::Parser;
use std::ffi::OsString;

pub fn run(args: impl IntoIterator<Item = OsString>) -> anyhow::Result<()> {
    let cli = match config::Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let job = config::resolve(cli)?;
    let outcome = driver::execute(&job)?;
    println!("wrote {}", outcome.manifest_path.display());
    Ok(())
}
