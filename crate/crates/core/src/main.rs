use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use planar_vio::bench::{format_table, parse_sizes, run_bench};
use planar_vio::eval::evaluate;
use planar_vio::io::{self, RunConfig};
use planar_vio::measurement::CovarianceForm;
use planar_vio::selftest::{format_report, run_selftest, SelftestOptions};
use planar_vio::sim::simulate;
use planar_vio::{run_dataset, Error, Result};

#[derive(Parser)]
#[command(name = "planar-vio", version, about = "Planar direct visual-inertial odometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with ground truth.
    Simulate {
        /// Simulation settings, `key = value` per line.
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the estimator over a dataset and write one estimate per frame.
    Run {
        /// Dataset directory containing manifest.txt.
        #[arg(long)]
        dataset: PathBuf,
        /// Estimator settings, `key = value` per line.
        #[arg(long)]
        config: PathBuf,
        /// Estimate CSV; per-frame stats go next to it as <out>.stats.csv.
        #[arg(long)]
        out: PathBuf,
        /// Override max_iters (1 gives a plain EKF update).
        #[arg(long)]
        max_iters: Option<usize>,
        /// Override cov_form: paper (default) or conventional.
        #[arg(long, value_parser = parse_cov_form)]
        cov_form: Option<CovarianceForm>,
    },
    /// Compare estimates with ground truth.
    Eval {
        /// Estimate CSV written by `run`.
        #[arg(long)]
        est: PathBuf,
        /// Ground-truth CSV.
        #[arg(long)]
        gt: PathBuf,
        /// Seconds after the first update excluded from the error metrics.
        #[arg(long, default_value_t = 3.0)]
        skip_seconds: f64,
    },
    /// Finite-difference and round-trip self checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time one frame's prediction batch plus iterated update.
    Bench {
        /// Comma-separated WxH image sizes.
        #[arg(long, default_value = "90x58,180x116")]
        sizes: String,
        /// Timed repetitions per size.
        #[arg(long, default_value_t = 50)]
        reps: usize,
    },
}

fn parse_cov_form(s: &str) -> std::result::Result<CovarianceForm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// `Ok(false)` means the command ran but reports failure.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Simulate { config, out } => {
            let cfg = io::load_sim_config(&config)?;
            let sim = simulate(&cfg)?;
            io::save_dataset(&out, &sim.dataset)?;
            std::fs::write(out.join("sim_config.txt"), io::sim_config_to_text(&cfg))?;
            let rms = sim.trajectory.rms_speed(cfg.duration, cfg.imu_rate);
            println!(
                "wrote {} IMU samples and {} frames to {} (rms speed {rms:.3} m/s, max inclination {:.1} deg)",
                sim.dataset.imu.len(),
                sim.dataset.frames.len(),
                out.display(),
                sim.plane.inclination_deg()
            );
            Ok(true)
        }
        Command::Run { dataset, config, out, max_iters, cov_form } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(n) = max_iters {
                cfg.max_iters = n;
            }
            if let Some(f) = cov_form {
                cfg.cov_form = f;
            }
            let ds = io::load_dataset(&dataset)?;
            let result = run_dataset(&ds, &cfg)?;
            io::write_states(&out, &result.estimates)?;
            std::fs::write(io::stats_path(&out), io::formats::encode_stats(&result.stats))?;
            println!("wrote {} estimates to {}", result.estimates.len(), out.display());
            match result.diverged_at {
                Some(t) => Err(Error::Diverged { last_good_t: t }),
                None => Ok(true),
            }
        }
        Command::Eval { est, gt, skip_seconds } => {
            let estimates = io::read_states(&est)?;
            let truth = io::read_states(&gt)?;
            let stats_file = io::stats_path(&est);
            let stats = if stats_file.exists() { Some(io::read_stats(&stats_file)?) } else { None };
            let report = evaluate(&estimates, &truth, stats.as_deref(), skip_seconds)?;
            print!("{}", report.to_csv());
            Ok(true)
        }
        Command::Selftest { seed } => {
            let results = run_selftest(&SelftestOptions { seed, ..Default::default() })?;
            print!("{}", format_report(&results));
            Ok(results.iter().all(|r| r.pass))
        }
        Command::Bench { sizes, reps } => {
            let rows = run_bench(&parse_sizes(&sizes)?, reps, 1)?;
            print!("{}", format_table(&rows));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
