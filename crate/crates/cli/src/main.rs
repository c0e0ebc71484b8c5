use std::process::ExitCode;

use clap::{Arg, ArgMatches};
use rddid::io::{RunConfig, CONFIG_KEYS};
use rddid::RdError;
use rddid_cli::{run, Command};

fn cli() -> clap::Command {
    let mut root = clap::Command::new("rddid")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Regression discontinuity estimation across multiple time periods")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in Command::ALL {
        let mut sub = clap::Command::new(c.name()).about(c.about()).arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .help("key = value config file; flags override its entries"),
        );
        for (key, help) in CONFIG_KEYS {
            sub = sub.arg(Arg::new(*key).long(*key).value_name("VALUE").help(*help));
        }
        root = root.subcommand(sub);
    }
    root
}

fn config(m: &ArgMatches) -> Result<RunConfig, RdError> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for (key, _) in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn execute(m: &ArgMatches, name: &str) -> Result<(), RdError> {
    let command: Command = name.parse()?;
    let cfg = config(m)?;
    let out = run(command, &cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    eprint!("{}", out.summary);
    match cfg.get("output") {
        Some(path) => std::fs::write(path, &out.body).map_err(|e| RdError::InvalidData(format!("{path}: {e}")))?,
        None => print!("{}", out.body),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match execute(sub, name) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(if e.category() == "config" { 2 } else { 1 })
        }
    }
}
