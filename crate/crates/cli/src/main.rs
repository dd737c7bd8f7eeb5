use clap::Parser;
use lipal_cli::{cmd_bench, cmd_cluster, cmd_toy, exit_code, exit_code_for, Cli, Command};

fn init_logging() {
    let level = match std::env::var("LIPAL_LOG").as_deref() {
        Ok("off") | Err(_) => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        Ok(other) => {
            eprintln!("LIPAL_LOG must be off, info, or debug (got '{other}'); using info");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new().filter_level(level).init();
}

fn main() {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are normal exits, everything else is a usage error
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(exit_code::USAGE);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let outcome = match &cli.command {
        Command::Toy {
            name,
            solver,
            output,
        } => cmd_toy(name, solver, output).map(|(report, code)| {
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            code
        }),
        Command::Cluster {
            instance,
            solver,
            output,
        } => cmd_cluster(instance, solver, output).map(|(report, code)| {
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            code
        }),
        Command::Bench { spec, out } => cmd_bench(spec, out),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code_for(&e));
        }
    }
}
