use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;
use stereo_vo_cli::{cmd_eval, cmd_features, cmd_run, cmd_synth, Cli, CliError, Command};

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => println!("{}", cmd_run(args)?),
        Command::Eval(args) => print!("{}", cmd_eval(args)?.report),
        Command::Synth(args) => {
            let s = cmd_synth(args)?;
            println!("wrote {} frames ({:.2} m path) to {}", s.frames, s.path_length, s.dir.display());
        }
        Command::Features(args) => {
            let f = cmd_features(args)?;
            println!("features    {} (equalized: {})", f.n_features, f.heq_applied);
            if let Some((before, after)) = f.before_after {
                println!("before_heq  {before}");
                println!("after_heq   {after}");
            }
            println!("csv         {}", f.csv.display());
            println!("annotated   {}", f.annotated.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
