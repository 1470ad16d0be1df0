//! Thin command-line front end; all functionality lives in the library.
//!
//! Exit codes: 0 = success (including a detected stopping event, which is a
//! result), 1 = configuration error, 2 = internal/runtime failure (including
//! failed verification checks and ensembles that stopped everywhere).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ksns::config::RunConfig;
use ksns::ensemble;
use ksns::error::Error;
use ksns::output::{self, DiagnosticsWriter};
use ksns::runner::PathRunner;
use ksns::verify;

#[derive(Parser)]
#[command(
    name = "ksns",
    about = "Pseudo-spectral simulator and verification harness for the 2D stochastic Keller-Segel-Navier-Stokes system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory from a TOML config; writes diagnostics and checkpoints.
    Run { config: PathBuf },
    /// Run a named verification suite: lemmas | semigroup | balance.
    Verify { suite: String },
    /// Run a Monte-Carlo ensemble from a TOML config; writes ensemble.json.
    Ensemble { config: PathBuf },
    /// Continue a trajectory from a checkpoint, bit-identically.
    Resume { checkpoint: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::Ensemble { config } => cmd_ensemble(&config),
        Command::Resume { checkpoint } => cmd_resume(&checkpoint),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_run(config_path: &Path) -> Result<ExitCode, Error> {
    let cfg = RunConfig::load(config_path)?;
    let dir = PathBuf::from(&cfg.output.directory);
    output::archive_config(&dir, &cfg)?;
    let mut runner = PathRunner::new(&cfg, cfg.noise.seed)?;
    let mut writer = DiagnosticsWriter::create(&dir.join("diagnostics.csv"))?;
    let event = drive(&mut runner, &cfg, &mut writer, &dir)?;
    output::write_checkpoint(&dir.join("final.ckpt"), &cfg, &runner.checkpoint_state()?)?;
    report_run(&runner, event.as_ref(), &mut writer)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_resume(checkpoint_path: &Path) -> Result<ExitCode, Error> {
    let (cfg, cp) = output::read_checkpoint(checkpoint_path)?;
    let start_step = cp.spec.step;
    let dir = PathBuf::from(&cfg.output.directory);
    let mut runner = PathRunner::from_checkpoint(&cfg, cp)?;
    let mut writer =
        DiagnosticsWriter::create(&dir.join(format!("diagnostics_from_{start_step}.csv")))?;
    let event = drive(&mut runner, &cfg, &mut writer, &dir)?;
    output::write_checkpoint(&dir.join("final.ckpt"), &cfg, &runner.checkpoint_state()?)?;
    report_run(&runner, event.as_ref(), &mut writer)?;
    Ok(ExitCode::SUCCESS)
}

fn drive(
    runner: &mut PathRunner,
    cfg: &RunConfig,
    writer: &mut DiagnosticsWriter,
    dir: &Path,
) -> Result<Option<ksns::stepper::StoppingEvent>, Error> {
    let dt = cfg.stepper.dt;
    let total_steps = (cfg.stepper.t_final / dt).round() as u64;
    let mut event = None;
    while runner.step_index() < total_steps {
        let ev = runner.advance()?;
        let k = runner.step_index();
        if k % cfg.output.cadence == 0 || ev.is_some() || k == total_steps {
            writer.write_row(&runner.diagnostics()?)?;
        }
        if cfg.stepper.checkpoint_every > 0 && k % cfg.stepper.checkpoint_every == 0 {
            output::write_checkpoint(
                &dir.join(format!("step_{k}.ckpt")),
                cfg,
                &runner.checkpoint_state()?,
            )?;
        }
        if let Some(ev) = ev {
            event = Some(ev);
            break;
        }
    }
    Ok(event)
}

fn report_run(
    runner: &PathRunner,
    event: Option<&ksns::stepper::StoppingEvent>,
    writer: &mut DiagnosticsWriter,
) -> Result<(), Error> {
    if let Some(ev) = event {
        writer.write_event_footer(ev)?;
        println!(
            "stopping event: {:?} at t = {:.6} ({} = {:.6e})",
            ev.kind, ev.time, ev.triggering_norm, ev.triggering_value
        );
    } else {
        println!("run complete: t = {:.6}", runner.time());
    }
    let pos = runner.positivity();
    if pos.violations > 0 {
        println!(
            "positivity violations: {} steps (worst min density {:.3e})",
            pos.violations, pos.worst
        );
    }
    Ok(())
}

fn cmd_verify(suite: &str) -> Result<ExitCode, Error> {
    let report = verify::run_suite(suite)?;
    print!("{}", report.render());
    if report.all_pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_ensemble(config_path: &Path) -> Result<ExitCode, Error> {
    let cfg = RunConfig::load(config_path)?;
    let dir = PathBuf::from(&cfg.output.directory);
    output::archive_config(&dir, &cfg)?;
    match ensemble::run_ensemble(&cfg) {
        Ok(stats) => {
            let json = serde_json::to_string_pretty(&stats)
                .map_err(|e| Error::contract(format!("serialize ensemble stats: {e}")))?;
            std::fs::write(dir.join("ensemble.json"), &json)?;
            println!(
                "ensemble complete: {} paths, stops: norm_cap={} entropy_cap={} nonfinite={}",
                stats.path_count,
                stats.stop_counts.norm_cap,
                stats.stop_counts.entropy_cap,
                stats.stop_counts.nonfinite
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ Error::EnsembleFailed(_)) => {
            std::fs::write(dir.join("ensemble_failed.txt"), format!("{e}\n"))?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}
