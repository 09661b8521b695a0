use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbitlab::experiment::{run, ExperimentConfig, Overrides, RunManifest, PRESETS};
use orbitlab::{Error, Result};

#[derive(Parser)]
#[command(name = "orbitlab", version, about = "Orbit and stabilizer experiments on learned features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        /// `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Rerun the config echoed by a previous run's manifest.json.
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        preset: Option<String>,
        /// Override one config key; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Output directory (default: $ORBITLAB_OUT, else ./orbitlab-out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the built-in presets.
    Presets,
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
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("orbitlab: error: {line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Presets => {
            for p in PRESETS {
                println!("{:<20} {:<20} {}", p.name, p.experiment.name(), p.description);
            }
            Ok(())
        }
        Command::Run { config, manifest, experiment, preset, sets, out, seed, workers } => {
            let sets = sets
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                        .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let ov = Overrides { experiment, preset, sets, out_dir: out, seed, workers };
            let cfg = match (config, manifest) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
                    ExperimentConfig::from_text(&text, &ov)?
                }
                (None, Some(path)) => RunManifest::read(&path)?.config(&ov)?,
                (None, None) => ExperimentConfig::resolve(&[], &ov)?,
            };
            let outcome = run(&cfg)?;
            for (k, v) in &outcome.summary {
                println!("{k} = {v}");
            }
            println!("wrote {} artifacts to {}", outcome.manifest.artifacts.len(), cfg.out_dir.display());
            Ok(())
        }
    }
}
