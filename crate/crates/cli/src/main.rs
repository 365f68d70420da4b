//! `soplab`: command-line front end for sop-core.

mod config;
mod run;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, Command};

use config::{key_help, resolve, CliError, CommandKind};

fn cli() -> Command {
    let mut app = Command::new("soplab")
        .about("Slowly oscillating periodic solutions of x'(t) = f(x(t-1))")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for kind in CommandKind::ALL {
        let mut sub = Command::new(kind.name()).about(kind.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value file; flags override its entries"),
        );
        for key in kind.keys() {
            sub = sub.arg(
                Arg::new(key)
                    .long(key)
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(key_help(key)),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let kind = CommandKind::from_name(name).expect("registered subcommand");
    let flags: BTreeMap<String, String> = kind
        .keys()
        .into_iter()
        .filter_map(|k| sub.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let result = resolve(kind, file.as_deref(), flags).and_then(|cfg| run::run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("soplab {name}: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("see `soplab {name} --help`");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
