use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfi_qkd::scan::{
    emit_csv, parse_config, render_report, run_comparison, run_distance_scan, run_pulse_scan,
    solve_point, write_csv, ScanMode, ScanOutput, ScanSpec,
};
use rfi_qkd::{Error, SecurityMode};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rfi-qkd",
    version,
    about = "Decoy-state RFI-QKD key-rate scans and optimizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate against distance, one curve per beta.
    ScanDistance(Common),
    /// Key rate against total pulse count at a fixed distance.
    ScanPulses(Common),
    /// Biased RFI against biased BB84 on the same grid.
    Compare(Common),
    /// Optimize a single operating point and print the full report.
    Optimize(Common),
}

/// Flags override values read from `--config`.
#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated frame rotation angles in degrees
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
    /// Total pulse count for distance scans, comparisons and optimize
    #[arg(long)]
    n_total: Option<f64>,
    /// Comma-separated pulse counts for scan-pulses
    #[arg(long, value_delimiter = ',')]
    n_pulses: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// rfi-biased, rfi-unbiased or bb84-biased
    #[arg(long)]
    mode: Option<ScanMode>,
    /// rfi-ie, rfi-literal or bb84
    #[arg(long)]
    security_mode: Option<SecurityMode>,
    #[arg(long)]
    n_starts: Option<usize>,
    /// Fixed distance in km (scan-pulses, optimize); first grid point otherwise
    #[arg(long, allow_hyphen_values = true)]
    distance: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    distance_stop: Option<f64>,
    #[arg(long)]
    distance_step: Option<f64>,
}

impl Common {
    fn spec(&self) -> Result<ScanSpec, Error> {
        let mut spec = match &self.config {
            Some(path) => parse_config(path)?,
            None => ScanSpec::default(),
        };
        if let Some(out) = &self.out {
            spec.out = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            spec.optimizer.seed = seed;
        }
        if let Some(beta) = &self.beta {
            spec.beta_list = beta.clone();
        }
        if let Some(n) = self.n_total {
            spec.n_total = n;
        }
        if let Some(list) = &self.n_pulses {
            spec.n_pulses_list = list.clone();
        }
        if let Some(g) = self.gamma {
            spec.gamma = g;
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        if let Some(s) = self.security_mode {
            spec.security_mode = s;
        }
        if let Some(n) = self.n_starts {
            spec.optimizer.n_starts = n;
        }
        if let Some(d) = self.distance {
            spec.distances.start = d;
            if self.distance_stop.is_none() {
                spec.distances.stop = spec.distances.stop.max(d);
            }
        }
        if let Some(d) = self.distance_stop {
            spec.distances.stop = d;
        }
        if let Some(d) = self.distance_step {
            spec.distances.step = d;
        }
        if spec.mode == ScanMode::Bb84Biased && self.security_mode.is_none() {
            spec.security_mode = SecurityMode::Bb84;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn write_output(spec: &ScanSpec, output: &ScanOutput) -> Result<(), Error> {
    for t in &output.truncated {
        eprintln!(
            "note: {} beta={} N={:e} stopped at {} km after {} zero-rate points",
            t.mode,
            t.beta_deg,
            t.n_pulses,
            t.last_distance_km,
            rfi_qkd::scan::ZERO_RUN_CUTOFF
        );
    }
    match &spec.out {
        Some(path) => emit_csv(&output.rows, path),
        None => write_csv(&output.rows, io::stdout().lock()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

/// Any failure while assembling the spec is a configuration error.
fn spec_of(c: &Common) -> Result<ScanSpec, Failure> {
    c.spec().map_err(|e| Failure(e, EXIT_CONFIG))
}

struct Failure(Error, u8);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() {
            EXIT_CONFIG
        } else {
            EXIT_RUNTIME
        };
        Failure(e, code)
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::ScanDistance(c) => {
            let spec = spec_of(&c)?;
            Ok(write_output(&spec, &run_distance_scan(&spec)?)?)
        }
        Command::ScanPulses(c) => {
            let spec = spec_of(&c)?;
            Ok(write_output(&spec, &run_pulse_scan(&spec)?)?)
        }
        Command::Compare(c) => {
            let spec = spec_of(&c)?;
            Ok(write_output(&spec, &run_comparison(&spec)?)?)
        }
        Command::Optimize(c) => {
            let spec = spec_of(&c)?;
            let [beta] = spec.beta_list[..] else {
                return Err(Error::Validation {
                    key: "beta".into(),
                    reason: "optimize takes exactly one angle".into(),
                }
                .into());
            };
            let d = spec.distances.start;
            let point = solve_point(&spec, spec.mode, beta, d, spec.n_total, &[])?;
            let mut stdout = io::stdout().lock();
            let text = format!(
                "mode            {}\nbeta_deg        {beta}\ndistance_km     {d}\nn_pulses        {:e}\n{}",
                spec.mode,
                spec.n_total,
                render_report(&point.params, &point.report)
            );
            stdout.write_all(text.as_bytes()).map_err(|source| {
                Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                }
                .into()
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(e, code)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
