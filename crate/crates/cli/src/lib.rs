//! `netctl`: runs scenarios end to end, validates scenario files, serves the
//! controller's northbound API and moves topology snapshots and
//! characterization records in and out.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lightline_core::characterization::{CharacterizationRecord, JsonlStore};
use lightline_core::oonc::TopologyAbstraction;
use lightline_core::pipeline::{bring_up, run, PipelineOptions, TransportKind};
use lightline_core::report::{checks_table, write_reports};
use lightline_core::scenario::Scenario;

pub mod serve;

#[derive(Debug, Parser)]
#[command(
    name = "netctl",
    version,
    about = "Optical network control plane over an emulated data plane"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write the reports.
    Run(RunArgs),
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Serve the northbound API against a live emulation.
    Serve(ServeArgs),
    /// Export or import the controller's topology abstraction.
    #[command(subcommand)]
    Topology(TopologyCommand),
    /// Export or import characterization records.
    #[command(subcommand)]
    Db(DbCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Transport {
    InProcess,
    Tcp,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file; the bundled triangle when omitted.
    pub scenario: Option<PathBuf>,
    /// Seed of the telemetry noise; the scenario's when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for characterization records and working points.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Multiplier on emulated device and compute durations.
    #[arg(long)]
    pub emulated_time_scale: Option<f64>,
    #[arg(long, value_enum, default_value = "in-process")]
    pub transport: Transport,
}

impl CommonArgs {
    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            seed: self.seed,
            data_dir: self.data_dir.clone(),
            time_scale: self.emulated_time_scale,
            transport: match self.transport {
                Transport::InProcess => TransportKind::InProcess,
                Transport::Tcp => TransportKind::Tcp,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Report directory.
    #[arg(long, default_value = "netctl-out")]
    pub out: PathBuf,
    /// Exit with status 3 when any run check fails.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// 0 picks a free port; the bound address is printed.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Subcommand)]
pub enum TopologyCommand {
    /// Provision the scenario and write the abstraction as JSON.
    Export {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Provision the scenario, replace its abstraction with the file's and
    /// print the resulting routing space.
    Import {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, short)]
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Write the stored characterization records as a JSON array.
    Export {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Append records from a JSON array to the store.
    Import {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, short)]
        file: PathBuf,
        /// Scenario whose channel plan the records must fit.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

/// Failure classes with their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn load_scenario(path: Option<&Path>) -> Result<Scenario, CliError> {
    let Some(path) = path else {
        return Ok(Scenario::bundled());
    };
    Scenario::load(path).map_err(|errs| {
        let lines: Vec<String> = errs.iter().map(|e| format!("{}: {e}", path.display())).collect();
        CliError::Validation(lines.join("\n"))
    })
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { scenario } => {
            let s = load_scenario(Some(&scenario))?;
            println!(
                "{}: valid ({} nodes, {} lines, {} script entries)",
                scenario.display(),
                s.file.nodes.len(),
                s.file.lines.len(),
                s.script().len()
            );
            Ok(())
        }
        Command::Serve(args) => serve::serve(args),
        Command::Topology(TopologyCommand::Export { common, out }) => {
            let s = load_scenario(common.scenario.as_deref())?;
            let session = bring_up(&s, &common.options()).map_err(runtime)?;
            let abs = session
                .controller
                .abstraction()
                .ok_or_else(|| runtime("not provisioned"))?;
            write_json(&out, abs)
        }
        Command::Topology(TopologyCommand::Import { common, file }) => {
            let s = load_scenario(common.scenario.as_deref())?;
            let text = fs::read_to_string(&file).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
            let abs: TopologyAbstraction =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
            let mut session = bring_up(&s, &common.options()).map_err(runtime)?;
            let space = session
                .controller
                .import_abstraction(abs)
                .map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
            println!("{}", serde_json::to_string_pretty(&space.summary()).map_err(runtime)?);
            Ok(())
        }
        Command::Db(DbCommand::Export { data_dir, out }) => {
            let store =
                JsonlStore::<CharacterizationRecord>::open(data_dir.join("characterization.jsonl")).map_err(runtime)?;
            write_json(&out, &store.load().map_err(runtime)?)
        }
        Command::Db(DbCommand::Import {
            data_dir,
            file,
            scenario,
        }) => {
            let text = fs::read_to_string(&file).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
            let records: Vec<CharacterizationRecord> =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
            let plan = load_scenario(scenario.as_deref())?.plan;
            for r in &records {
                r.fitted
                    .validate(&plan)
                    .map_err(|e| CliError::Validation(format!("{}: {}: {e}", file.display(), r.span_id)))?;
            }
            let store =
                JsonlStore::<CharacterizationRecord>::open(data_dir.join("characterization.jsonl")).map_err(runtime)?;
            store.append_all(&records).map_err(runtime)?;
            println!("imported {} records into {}", records.len(), store.path().display());
            Ok(())
        }
    }
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)? + "\n";
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let s = load_scenario(args.common.scenario.as_deref())?;
    let outcome = run(&s, &args.common.options()).map_err(runtime)?;
    let paths = write_reports(&args.out, &outcome.report, &outcome.log).map_err(runtime)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    print!("\n{}", checks_table(&outcome.report));
    let failed: Vec<&str> = outcome
        .report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if args.check && !failed.is_empty() {
        return Err(CliError::Check(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
