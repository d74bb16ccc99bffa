use std::path::PathBuf;
use std::process::ExitCode;

use afs_cli::output::{unix_ms, OutputDir, RunManifest};
use afs_cli::{run_command, CliError, Command, Config};
use clap::Parser;

/// Certificate engine and Monte-Carlo lab for adaptive feedback scaling.
///
/// Exit status: 0 pass, 1 checked failure, 2 usage or config error, 3 internal error.
#[derive(Debug, Parser)]
#[command(name = "afslab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; `AFSLAB_OUT` overrides it.
    #[arg(long, default_value = "afslab-out")]
    out: PathBuf,
    /// Overrides `run.workers`; never changes results.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let started = unix_ms();
    let mut cfg = Config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        cfg.run.workers = w;
    }
    let root = std::env::var_os("AFSLAB_OUT").map_or(cli.out, PathBuf::from);
    let digest = cfg.digest();
    let mut out = OutputDir::create(&root.join(cli.command.name()), &digest)?;
    let outcome = run_command(cli.command, &cfg, &mut out)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    let manifest = RunManifest {
        command: cli.command.name().into(),
        config_digest: digest,
        master_seed: cfg.run.seed,
        workers: cfg.run.workers,
        versions: vec![
            ("afs-lab".into(), afs_lab::VERSION.into()),
            ("afs-cli".into(), env!("CARGO_PKG_VERSION").into()),
        ],
        started_unix_ms: started,
        finished_unix_ms: 0,
        passed: outcome.passed,
        outputs: Vec::new(),
    };
    let manifest = out.finish(manifest)?;
    println!(
        "{} {} -> {}",
        if outcome.passed { "PASS" } else { "FAIL" },
        manifest.command,
        out_display(&root, cli.command)
    );
    Ok(outcome.passed)
}

fn out_display(root: &std::path::Path, cmd: Command) -> String {
    root.join(cmd.name()).display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("afslab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
