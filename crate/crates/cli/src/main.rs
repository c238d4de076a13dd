use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use devgeo_core::report::{self, AnalysisSpec, RunConfig};
use devgeo_core::{synthetic, Error};
use serde::Serialize;

/// Locate active open-source contributors from push-event archives and
/// tabulate them by country and region.
#[derive(Debug, Parser)]
#[command(name = "devgeo", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage and write the run report.
    Pipeline(RunArgs),
    /// Parse archives and write the activity table.
    Ingest(RunArgs),
    /// Resolve active emails to accounts from the activity table.
    Resolve(RunArgs),
    /// Locate accounts from the accounts table.
    Geocode(RunArgs),
    /// Count located accounts per region for every configured scheme.
    Aggregate(RunArgs),
    /// Compute the statistics tables from aggregate counts.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Analysis spec file; repeat for several schemes.
        #[arg(long = "spec", required = true)]
        specs: Vec<PathBuf>,
    },
    /// Write the synthetic fixture and its ground truth.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = synthetic::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Set any config key, e.g. `--set k_floor=5`. Applied after the
    /// dedicated flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(flatten)]
    keys: KeyFlags,
}

/// One flag per config key.
#[derive(Debug, Args)]
struct KeyFlags {
    #[arg(long)]
    events: Option<String>,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    resolver_fixture: Option<String>,
    #[arg(long)]
    resolution_cache: Option<String>,
    #[arg(long)]
    profiles: Option<String>,
    #[arg(long)]
    microblog: Option<String>,
    #[arg(long)]
    gazetteer: Option<String>,
    #[arg(long)]
    cctld: Option<String>,
    #[arg(long)]
    universities: Option<String>,
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    merge_rules: Option<String>,
    #[arg(long)]
    boundaries: Option<String>,
    #[arg(long)]
    window_start: Option<String>,
    #[arg(long)]
    window_end: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    max_attempts: Option<String>,
    #[arg(long)]
    in_flight: Option<String>,
    #[arg(long)]
    suffix_blocklist: Option<String>,
    #[arg(long)]
    login_blocklist: Option<String>,
    #[arg(long)]
    include_unreliable: Option<String>,
    #[arg(long)]
    k_floor: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Seeded sampling of resolution shas; omit for first-seen order.
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    jobs: Option<String>,
}

impl KeyFlags {
    fn pairs(&self) -> Vec<(String, String)> {
        let all = [
            ("events", &self.events),
            ("provider", &self.provider),
            ("resolver_fixture", &self.resolver_fixture),
            ("resolution_cache", &self.resolution_cache),
            ("profiles", &self.profiles),
            ("microblog", &self.microblog),
            ("gazetteer", &self.gazetteer),
            ("cctld", &self.cctld),
            ("universities", &self.universities),
            ("schemes", &self.schemes),
            ("merge_rules", &self.merge_rules),
            ("boundaries", &self.boundaries),
            ("window_start", &self.window_start),
            ("window_end", &self.window_end),
            ("threshold", &self.threshold),
            ("max_attempts", &self.max_attempts),
            ("in_flight", &self.in_flight),
            ("suffix_blocklist", &self.suffix_blocklist),
            ("login_blocklist", &self.login_blocklist),
            ("include_unreliable", &self.include_unreliable),
            ("k_floor", &self.k_floor),
            ("out_dir", &self.out_dir),
            ("seed", &self.seed),
            ("jobs", &self.jobs),
        ];
        debug_assert_eq!(all.len(), report::RUN_KEYS.len());
        all.into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut overrides = self.keys.pairs();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("--set expects KEY=VALUE, got {item:?}")))?;
            overrides.push((k.trim().to_string(), v.to_string()));
        }
        let cwd = std::env::current_dir().map_err(|e| Error::Io { path: PathBuf::from("."), source: e })?;
        RunConfig::load(self.config.as_deref(), &overrides, &cwd)
    }
}

fn print<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pipeline(args) => {
            let cfg = args.load()?;
            let report = report::cmd_pipeline(&cfg)?;
            log::info!("outputs in {}", cfg.out_dir.display());
            print(&report.funnel)
        }
        Command::Ingest(args) => print(&report::cmd_ingest(&args.load()?)?),
        Command::Resolve(args) => print(&report::cmd_resolve(&args.load()?)?),
        Command::Geocode(args) => print(&report::cmd_geocode(&args.load()?)?),
        Command::Aggregate(args) => print(&report::cmd_aggregate(&args.load()?)?),
        Command::Analyze { run, specs } => {
            let cfg = run.load()?;
            let mut summaries = Vec::new();
            for path in &specs {
                let spec = AnalysisSpec::load(path)?;
                summaries.push(report::cmd_analyze(&cfg, &spec)?);
            }
            print(&summaries)
        }
        Command::Fixture { out, seed } => {
            let truth = synthetic::write_fixture(&out, seed)?;
            log::info!("fixture written to {}", out.display());
            print(&serde_json::json!({
                "dir": out.display().to_string(),
                "seed": truth.seed,
                "total_lines": truth.total_lines,
                "accounts_at_threshold": truth.accounts_at_threshold,
                "located": truth.located,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
