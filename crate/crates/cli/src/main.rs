use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkd_cli::calibrate::{calibrate, format_report, TargetsFile};
use qkd_cli::config::{Mode, Scale, ScenarioConfig, SweepSpec, SweepVar};
use qkd_cli::error::{CliError, CliResult};
use qkd_cli::report::{histogram_from_table, histogram_table, tradeoff_table, Metadata, ResultsTable};
use qkd_core::security::{max_distance, min_mu};
use qkd_core::timing::{fit_peaks_with, optimize_window, synthetic_histogram, window_tradeoff, FitOptions, SyntheticSpec};

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "Phase-encoded BB84 link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Scenario configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario, used when no config file is given.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> CliResult<ScenarioConfig> {
        match (&self.config, &self.preset) {
            (Some(p), _) => ScenarioConfig::load(p),
            (None, Some(name)) => ScenarioConfig::from_preset(name),
            (None, None) => ScenarioConfig::from_preset("electrical_sync_50km"),
        }
    }
}

#[derive(Args)]
struct Output {
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a whitespace-separated `.dat` next to the CSV.
    #[arg(long, requires = "out")]
    dat: bool,
}

impl Output {
    fn emit(&self, table: &ResultsTable) -> CliResult<()> {
        match &self.out {
            Some(p) => table.save(p, self.dat),
            None => table.write_csv(std::io::stdout().lock()),
        }
    }
}

#[derive(Args)]
struct RunOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    n_slots: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.run.mode = m;
        }
        if let Some(n) = self.n_slots {
            cfg.run.n_slots = n;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a configuration (and its sweep, if any).
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: RunOverrides,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep one variable over a range.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        var: SweepVar,
        /// First value: mean photon number, km or ns.
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 31)]
        points: usize,
        /// Default: log for mu, linear otherwise.
        #[arg(long, value_enum)]
        scale: Option<Scale>,
        #[command(flatten)]
        overrides: RunOverrides,
        #[command(flatten)]
        output: Output,
    },
    /// Print the minimum secure mean photon number and maximum distance.
    Thresholds {
        #[command(flatten)]
        source: Source,
    },
    /// Fit receiver loss and background rate to measured targets.
    Calibrate {
        /// Targets file with `[[target]]` entries.
        #[arg(long)]
        targets: PathBuf,
        /// Base configuration that receives the fitted values.
        #[command(flatten)]
        source: Source,
        /// Where to write the calibrated configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window width trade-off and the secret-rate optimum.
    Window {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Write a synthetic arrival-time histogram.
    SynthHistogram {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5e5)]
        counts: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Fit the signal and Raman peaks of a `time_ns,counts` histogram.
    FitHistogram {
        #[arg(long = "in")]
        input: PathBuf,
        /// Early-to-Late spacing of the signal pair, ns.
        #[arg(long, default_value_t = 320.0)]
        bit_delay_ns: f64,
    },
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run { source, overrides, output } => {
            let mut cfg = source.load()?;
            overrides.apply(&mut cfg);
            output.emit(&qkd_cli::run::run(&cfg)?)
        }
        Command::Sweep { source, var, from, to, points, scale, overrides, output } => {
            let mut cfg = source.load()?;
            overrides.apply(&mut cfg);
            cfg.sweep = Some(SweepSpec { var, from, to, points, scale });
            let mut table = qkd_cli::run::run(&cfg)?;
            table.metadata = Some(Metadata::new("sweep", cfg.digest(), cfg.run.seed));
            output.emit(&table)
        }
        Command::Thresholds { source } => {
            let cfg = source.load()?;
            cfg.validate()?;
            let mu = min_mu(&cfg.scenario, &cfg.security)?;
            let km = max_distance(&cfg.scenario, &cfg.security)?;
            println!("min_mu = {mu:.6e}");
            println!("max_distance_km = {km:.3}");
            Ok(())
        }
        Command::Calibrate { targets, source, out } => {
            let mut cfg = source.load()?;
            let targets = TargetsFile::load(&targets)?;
            let report = calibrate(&targets, &cfg.security)?;
            print!("{}", format_report(&report));
            report.calibration.apply(&mut cfg.scenario);
            if let Some(path) = out {
                std::fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(&path, e))?;
            }
            Ok(())
        }
        Command::Window { source, points, output } => {
            let cfg = source.load()?;
            cfg.validate()?;
            if points < 2 {
                return Err(CliError::Validation("points: must be >= 2".into()));
            }
            let fwhm = cfg.scenario.detector.jitter_fwhm;
            let hi = (5.0 * fwhm).min(cfg.scenario.interferometer.bit_delay);
            let widths: Vec<f64> = (0..points)
                .map(|i| 0.1 * fwhm + (hi - 0.1 * fwhm) * i as f64 / (points - 1) as f64)
                .collect();
            let sel = optimize_window(&cfg.scenario, &cfg.security)?;
            eprintln!(
                "optimal window {:.2} ns, captured {:.4}, secret rate {:.4e} Hz{}",
                sel.width * 1e9,
                sel.captured_fraction,
                sel.secret_rate,
                if sel.zero_rate { " (no positive rate; lowest QBER)" } else { "" }
            );
            let mut table = tradeoff_table(&window_tradeoff(&cfg.scenario, &widths)?);
            table.metadata = Some(Metadata::new("window", cfg.digest(), cfg.run.seed));
            output.emit(&table)
        }
        Command::SynthHistogram { seed, counts, output } => {
            let spec = SyntheticSpec { total_counts: counts, ..Default::default() };
            let hist = synthetic_histogram(&spec, seed)?;
            let mut table = histogram_table(&hist);
            let digest = format!("{:?}", spec);
            table.metadata = Some(Metadata::new("synth-histogram", digest, seed));
            output.emit(&table)
        }
        Command::FitHistogram { input, bit_delay_ns } => {
            let file = std::fs::File::open(&input).map_err(|e| CliError::io(&input, e))?;
            let hist = histogram_from_table(&ResultsTable::read_csv(file)?)?;
            let opts = FitOptions { bit_delay: bit_delay_ns * 1e-9, ..Default::default() };
            let fit = fit_peaks_with(&hist, &opts)?;
            let mut out = std::io::stdout().lock();
            let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| CliError::io("<stdout>", e));
            w(&mut out, format!("early_center_ns = {:.3}", fit.primary_peak_centers[0] * 1e9))?;
            w(&mut out, format!("late_center_ns = {:.3}", fit.primary_peak_centers[1] * 1e9))?;
            w(&mut out, format!("fwhm_ns = {:.3}", fit.shared_fwhm * 1e9))?;
            w(&mut out, format!("signal_ratio = {:.5}", fit.signal_ratio))?;
            w(&mut out, format!("pedestal_per_bin = {:.3}", fit.pedestal))?;
            match (fit.raman_center, fit.raman_delay, fit.raman_ratio) {
                (Some(c), Some(d), Some(r)) => {
                    w(&mut out, format!("raman_center_ns = {:.3}", c * 1e9))?;
                    w(&mut out, format!("raman_delay_ns = {:.3}", d * 1e9))?;
                    w(&mut out, format!("raman_ratio = {:.5}", r))?;
                }
                _ => w(&mut out, "raman = absent".into())?,
            }
            w(&mut out, format!("raman_delta_chi2 = {:.2}", fit.raman_delta_chi2))
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
