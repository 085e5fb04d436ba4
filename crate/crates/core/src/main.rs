use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adiabat::experiments::{self, ExperimentConfig, Overrides};
use adiabat::Error;

#[derive(Parser)]
#[command(name = "adiabat", version, about = "Noise-assisted adiabatic passage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory, plus an ensemble if configured.
    Run(Common),
    /// Final |psi0| over passage times and the threshold time.
    ScanTime(Common),
    /// Ensemble minima over noise intensities.
    ScanNoise(Common),
    /// Passage-time ratio without and with saturating noise.
    Speedup(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::Unsupported(_) => 2,
        Error::Resolution { .. } | Error::GapClosure { .. } | Error::Domain { .. } | Error::NotInTargetState { .. } => 3,
        _ => 1,
    }
}

fn execute(cmd: Command) -> adiabat::Result<()> {
    let (verb, c) = match cmd {
        Command::Run(c) => ("run", c),
        Command::ScanTime(c) => ("scan-time", c),
        Command::ScanNoise(c) => ("scan-noise", c),
        Command::Speedup(c) => ("speedup", c),
    };
    let mut cfg = ExperimentConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        seed: c.seed,
        steps: c.steps,
        traj: c.traj,
        out_dir: c.out_dir,
    });
    let out = cfg.output_dir();
    match verb {
        "run" => {
            let r = experiments::run(&cfg, &out)?;
            let m = r.trajectory.metrics();
            println!("min |psi0| = {:.6}, final |psi0| = {:.6}", m.min_abs_psi0, m.final_abs_psi0);
            if let Some(e) = r.ensemble {
                let m = e.metrics();
                println!(
                    "ensemble of {}: min mean |psi0| = {:.6}, final = {:.6}",
                    e.n_traj, m.min_abs_psi0, m.final_abs_psi0
                );
            }
        }
        "scan-time" => {
            let r = experiments::run_scan_time(&cfg, &out)?;
            for p in &r.points {
                println!("T = {:<10} final |psi0| = {:.6}", p.passage_time, p.final_abs_psi0);
            }
            match r.threshold {
                Some(t) => println!("|psi0(T)| >= {} from T = {t:.4}", r.target),
                None => println!("|psi0(T)| >= {} not reached", r.target),
            }
        }
        "scan-noise" => {
            let r = experiments::run_scan_noise(&cfg, &out)?;
            for p in &r.points {
                println!(
                    "Gamma = {:<10} min mean |psi0| = {:.6} +- {:.6}",
                    p.gamma, p.min_mean_abs_psi0, p.stderr_at_min
                );
            }
            if !r.violations.is_empty() {
                println!("monotonicity violated at points {:?}", r.violations);
            }
            if let Some(g) = r.saturation_gamma {
                println!("saturation (min >= 0.95) from Gamma = {g}");
            }
        }
        _ => {
            let r = experiments::run_speedup(&cfg, &out)?;
            println!("T_free = {:?}, T_noisy = {:?}, speedup = {:?}", r.t_free, r.t_noisy, r.ratio);
        }
    }
    println!("output in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
