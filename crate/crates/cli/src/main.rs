//! Config-driven entry point: parse an experiment description, run the
//! solver or a convergence study, write reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver divergence,
//! 4 Krylov non-convergence, 1 anything else.

mod app;
mod config;

use clap::{Parser, Subcommand};
use magros_core::Error;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "magros",
    version,
    about = "Exponential-integrator PDE solver and convergence study driver"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config: a path to a TOML file or a bundled config name.
    Run {
        /// Config file path or bundled name (see `list-configs`).
        config: String,
    },
    /// List the bundled configs.
    ListConfigs,
    /// Print a fully commented default config to stdout.
    DumpDefaultConfig,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config } => run(&config),
        Cmd::ListConfigs => {
            for (name, _, blurb) in config::BUNDLED {
                println!("{name:<24} {blurb}");
            }
            0
        }
        Cmd::DumpDefaultConfig => {
            print!("{}", config::DEFAULT_CONFIG);
            0
        }
    };
    std::process::exit(code);
}

fn run(arg: &str) -> i32 {
    match try_run(arg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn try_run(arg: &str) -> magros_core::Result<()> {
    let path = Path::new(arg);
    let (name, text) = if path.is_file() {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("config")
            .to_string();
        (stem, std::fs::read_to_string(path)?)
    } else if let Some(text) = config::bundled(arg) {
        (arg.to_string(), text.to_string())
    } else {
        return Err(Error::Config(format!(
            "`{arg}` is neither a config file nor a bundled name; see `magros list-configs`"
        )));
    };
    let out_override = std::env::var_os("MAGROS_OUT_DIR").map(PathBuf::from);
    let plan = config::parse(&name, &text, out_override)?;
    app::execute(&plan)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Mesh(_) | Error::Assembly(_) | Error::Dimension(_) => 2,
        Error::Diverged(_) => 3,
        Error::KrylovNoConvergence(_) => 4,
        Error::Numerical(_) | Error::Io(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_categories() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Mesh("x".into())), 2);
        assert_eq!(exit_code(&Error::Diverged("x".into())), 3);
        assert_eq!(exit_code(&Error::KrylovNoConvergence("x".into())), 4);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 1);
    }
}
