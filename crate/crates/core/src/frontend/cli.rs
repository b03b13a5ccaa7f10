use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use super::{parse_model, render_final_state, render_step, Format};
use crate::variation::{Config, DispatchKind, MediumKind, RunnablesKind, SchedulerKind};
use crate::vm::{Engine, Halt, VmError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BLOCKED: i32 = 2;
pub const EXIT_STEP_LIMIT: i32 = 3;
pub const EXIT_INVALID: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "sysmodel",
    version,
    about = "Run object-oriented system models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a model file and print the final data store.
    Run(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Model source (.smm).
    file: PathBuf,
    /// Overrides the file's runnables selection.
    #[arg(long, value_name = "rtc|conc")]
    runnables: Option<RunnablesKind>,
    /// Overrides the file's scheduler.
    #[arg(long, value_name = "rr|prio")]
    scheduler: Option<SchedulerKind>,
    #[arg(long, value_name = "single")]
    dispatch: Option<DispatchKind>,
    #[arg(long, value_name = "reliable")]
    medium: Option<MediumKind>,
    /// Stop after this many steps.
    #[arg(long, value_name = "N")]
    max_steps: Option<u64>,
    /// Print one line per executed step before the final state.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write the output here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Text,
    Structured,
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit status.
pub fn cli_main<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let Command::Run(args) = cli.command;
    run(&args, out, err)
}

fn run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let path = args.file.display();
    let text = match std::fs::read_to_string(&args.file) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {path}: {e}");
            return EXIT_USAGE;
        }
    };
    let mut def = match parse_model(&text) {
        Ok(d) => d,
        Err(diags) => {
            for d in diags {
                let _ = writeln!(err, "{path}:{d}");
            }
            return EXIT_INVALID;
        }
    };
    let sel = &mut def.selections;
    sel.runnables = args.runnables.unwrap_or(sel.runnables);
    sel.scheduler = args.scheduler.unwrap_or(sel.scheduler);
    sel.dispatch = args.dispatch.unwrap_or(sel.dispatch);
    sel.medium = args.medium.unwrap_or(sel.medium);

    let cfg = Config::new(def.model, def.selections);
    let mut report = String::new();
    let result = {
        let mut engine = Engine::new(&cfg).max_steps(args.max_steps);
        if args.trace {
            engine = engine.observe(|s| {
                report.push_str(&render_step(s));
                report.push('\n');
            });
        }
        engine.run_main(&def.setup)
    };
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return match e {
                VmError::Model(_) => EXIT_INVALID,
                VmError::Exec(_) => EXIT_RUNTIME,
            };
        }
    };
    let format = match args.format {
        FormatArg::Text => Format::Text,
        FormatArg::Structured => Format::Structured,
    };
    report.push_str(&render_final_state(&result, format));

    let written = match &args.out {
        Some(p) => std::fs::write(p, &report),
        None => out.write_all(report.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write output: {e}");
        return EXIT_USAGE;
    }
    match result.halt {
        Halt::AllDone => EXIT_OK,
        Halt::Blocked(_) => EXIT_BLOCKED,
        Halt::StepLimit => EXIT_STEP_LIMIT,
    }
}
