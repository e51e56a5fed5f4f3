//! `ksns`: command-line front end of the solver harness.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ksns_core::harness::experiments::{check_b2_config, run_convergence, run_ensemble, run_uniqueness, simulate, validate};
use ksns_core::harness::output::{write_convergence, write_ensemble, write_json, write_simulation, write_uniqueness};
use ksns_core::harness::{ExperimentConfig, HarnessError};
use ksns_core::integrator::Status;

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 1;
const EXIT_BLOWUP: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ksns", version, about = "Stochastic Keller-Segel / Navier-Stokes solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// override a config entry, e.g. `model.d1=10` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// noise seed (seed base for ensembles)
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads for ensembles and refinement levels
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// single trajectory
    Simulate(Common),
    /// Monte Carlo ensemble
    Ensemble(Common),
    /// refinement study along one axis
    Converge(Common),
    /// twin and perturbed-twin runs
    Uniqueness(Common),
    /// evaluate the diffusion-dominance condition
    CheckB2(Common),
    /// audit the structural hypotheses
    Validate(Common),
}

fn load(c: &Common, kind: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(c.config.as_deref(), &c.set)?;
    if let Some(s) = c.seed {
        if kind == "ensemble" {
            cfg.ensemble.seed_base = s;
        } else {
            cfg.integrator.seed = s;
        }
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out.clone().unwrap_or_else(|| Path::new("ksns-out").join(&cfg.run_id))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn status_code(s: &Status) -> u8 {
    match s {
        Status::Completed => EXIT_OK,
        Status::BlowUp { .. } => EXIT_BLOWUP,
        Status::Error { .. } => EXIT_VALIDATION,
    }
}

fn execute(cmd: &Command) -> Result<u8, HarnessError> {
    match cmd {
        Command::Simulate(c) => {
            let cfg = load(c, "simulate")?;
            let r = simulate(&cfg)?;
            let out = out_dir(c, &cfg);
            write_simulation(&out, &r)?;
            println!(
                "simulate {}: {:?}, {} steps, mass drift {:.3e}, output in {}",
                cfg.run_id,
                r.summary.status,
                r.summary.steps,
                r.summary.mass_drift_rel,
                out.display()
            );
            Ok(status_code(&r.summary.status))
        }
        Command::Ensemble(c) => {
            let cfg = load(c, "ensemble")?;
            let r = run_ensemble(&cfg)?;
            let out = out_dir(c, &cfg);
            write_ensemble(&out, &r)?;
            let s = &r.summary;
            println!(
                "ensemble {}: {}/{} completed, E sup F1 = {:.6e}, E sup F1^2 = {:.6e}",
                cfg.run_id, s.completers, s.n_members, s.e_sup_f1[0], s.e_sup_f1[1]
            );
            Ok(if s.completers == s.n_members { EXIT_OK } else { EXIT_BLOWUP })
        }
        Command::Converge(c) => {
            let cfg = load(c, "converge")?;
            let r = run_convergence(&cfg)?;
            let out = out_dir(c, &cfg);
            write_convergence(&out, &r)?;
            for l in &r.levels {
                println!("level {:>12.6e}  distance {:.6e}", l.level, l.distance);
            }
            let rate = r.rate.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into());
            println!("rate {rate} window [{}, {}] {}", r.window[0], r.window[1], verdict(r.pass));
            if let Some(a) = &r.aborted {
                println!("aborted: {a}");
                return Ok(EXIT_BLOWUP);
            }
            Ok(if r.pass { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Uniqueness(c) => {
            let cfg = load(c, "uniqueness")?;
            let r = run_uniqueness(&cfg)?;
            let out = out_dir(c, &cfg);
            write_uniqueness(&out, &r)?;
            println!(
                "uniqueness {}: twins identical {}, ratio {:.4}, C_hat {:.4e}, {}",
                cfg.run_id,
                r.twins_identical,
                r.ratio,
                r.c_hat,
                verdict(r.pass)
            );
            Ok(if r.pass { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::CheckB2(c) => {
            let cfg = load(c, "check-b2")?;
            let r = check_b2_config(&cfg)?;
            if let Some(out) = &c.out {
                std::fs::create_dir_all(out)?;
                write_json(&out.join("summary.json"), &r)?;
            }
            println!("lhs = {:.12} {}", r.lhs, verdict(r.pass));
            Ok(if r.pass { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Validate(c) => {
            let cfg = load(c, "validate")?;
            let r = validate(&cfg)?;
            if let Some(out) = &c.out {
                std::fs::create_dir_all(out)?;
                write_json(&out.join("summary.json"), &r)?;
            }
            for ch in r.assumptions_a.checks.iter().chain(&r.assumptions_b.checks) {
                println!("{} {}: {}", verdict(ch.passed), ch.name, ch.detail);
            }
            Ok(if r.passed { EXIT_OK } else { EXIT_VALIDATION })
        }
    }
}

fn threads(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Simulate(c)
        | Command::Ensemble(c)
        | Command::Converge(c)
        | Command::Uniqueness(c)
        | Command::CheckB2(c)
        | Command::Validate(c) => c.threads,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            return ExitCode::from(code);
        }
    };
    if let Some(n) = threads(&cli.command) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_VALIDATION })
        }
    }
}
