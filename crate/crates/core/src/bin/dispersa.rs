use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dispersa::error::{Error, Result};
use dispersa::kernel::{airy5_ode_residual, asymptotic_check, KernelMethod, KernelTable, DEFAULT_X_MAX};
use dispersa::lab::io::write_file;
use dispersa::lab::run::{decay_report_for_run, energy_for_run, persist_linear, simulate, verify_linear};
use dispersa::lab::{sweep, RunConfig};

#[derive(Parser)]
#[command(name = "dispersa", version, about = "Fifth-order dispersive decay laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured data and write snapshots and reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Free-flow decay report of the configured data.
    VerifyLinear {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate the fifth-order Airy kernel on [-xmax, xmax].
    Kernel {
        #[arg(long, default_value_t = DEFAULT_X_MAX)]
        xmax: f64,
        #[arg(long, default_value_t = 0.05)]
        dx: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the decay report of a stored run.
    DecayReport {
        #[arg(long)]
        run: PathBuf,
    },
    /// Corrected energy along a stored run.
    Energy {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        linearized: bool,
    },
    /// Lifespan sweep over a list of data sizes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
    },
}

fn kernel(xmax: f64, dx: f64, out: &Path) -> Result<()> {
    let table = KernelTable::build(-xmax, xmax, dx, KernelMethod::ContourQuad)?;
    table.write(out)?;
    let report = asymptotic_check(&table);
    let mut csv = String::from("key,value\n");
    for (k, v) in report.rows() {
        csv.push_str(&format!("{k},{v:?}\n"));
    }
    csv.push_str(&format!("ode_residual,{:?}\n", airy5_ode_residual(&table)?));
    write_file(&out.with_extension("asymptotics.csv"), &csv)?;
    println!("wrote {} samples to {}", table.len(), out.display());
    print!("{csv}");
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config } => {
            let cfg = RunConfig::load(&config)?;
            let res = simulate(&cfg);
            match &res {
                Ok(o) => println!(
                    "run complete: {} snapshots, {} report rows, output in {}",
                    o.trajectory.snapshots.len(),
                    o.report.rows.len(),
                    cfg.output_dir.display()
                ),
                Err(_) => println!("run aborted; partial output in {}", cfg.output_dir.display()),
            }
            res.map(|_| ())
        }
        Command::VerifyLinear { config } => {
            let cfg = RunConfig::load(&config)?;
            let rep = verify_linear(&cfg)?;
            persist_linear(&rep, &cfg.output_dir)?;
            for (t, r) in &rep.dispersive {
                println!("t={t:<12} t^(1/5)|u|_inf/|u0|_1={r:.6}");
            }
            Ok(())
        }
        Command::Kernel { xmax, dx, out } => kernel(xmax, dx, &out),
        Command::DecayReport { run } => {
            let rep = decay_report_for_run(&run)?;
            print!("{}", rep.to_csv());
            Ok(())
        }
        Command::Energy { run, linearized } => {
            let series = energy_for_run(&run, linearized)?;
            print!("{}", series.to_csv());
            Ok(())
        }
        Command::Sweep { config, epsilons } => {
            let cfg = RunConfig::load(&config)?;
            let res = sweep(&cfg, &epsilons)?;
            write_file(&cfg.output_dir.join("sweep.csv"), res.to_csv())?;
            let json = serde_json::to_string_pretty(&res).map_err(|e| Error::Format {
                path: cfg.output_dir.join("sweep.json"),
                message: e.to_string(),
            })?;
            write_file(&cfg.output_dir.join("sweep.json"), json)?;
            print!("{}", res.to_csv());
            match (res.fitted_exponent, &res.marker) {
                (Some(p), _) => println!("fitted exponent {p:.4} (predicted {:.4})", res.predicted_exponent),
                (None, Some(m)) => println!("{m}"),
                _ => {}
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
