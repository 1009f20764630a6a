//! `fdmqkd` — configuration-driven front end for the FDM CV-QKD simulator
//! and rate engine.
//!
//! Subcommands:
//!
//! - `simulate` — run the waveform Monte Carlo link in both measurement
//!   bases and write per-symbol records plus a per-channel rate report.
//! - `sweep-distance` — analytic total secret key rate versus fiber length
//!   for one or more channel counts.
//! - `sweep-if` — Monte Carlo excess noise versus IF placement for a set of
//!   symbol rates, with a knee summary per rate.
//! - `sweep-spacing` — two-channel Monte Carlo excess noise versus channel
//!   spacing, referenced to a single-channel floor run.
//! - `calibrate` — fit the back-to-back noise budget to target reaches and
//!   write the fitted parameters as a config overlay.
//!
//! Every command reads the same text configuration format (see the core
//! crate's `config` module); `--overlay` files merge over the base config
//! key by key. All CSV outputs start with a comment line carrying the
//! SHA-256 of the fully resolved configuration, and Monte Carlo outputs are
//! byte-identical across runs for a fixed `--seed`.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numerical
//! or I/O failure, 4 calibration targets infeasible (best fit still
//! written).

use clap::{Args, Parser, Subcommand};
use fdmqkd_core::channel_detector::write_records_csv;
use fdmqkd_core::config::{self, SimConfig};
use fdmqkd_core::sweep;
use fdmqkd_core::{Basis, Error, RateReport};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fdmqkd", version, about = "FDM CV-QKD link simulator and rate engine")]
struct Cli {
    /// Worker threads for sweep grid points (default: $FDMQKD_JOBS, else all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the link in both bases; write symbol records and channel rates
    Simulate(SimulateArgs),
    /// Total secret key rate versus fiber length (analytic)
    SweepDistance(SweepDistanceArgs),
    /// Monte Carlo excess noise versus IF placement, with knee detection
    SweepIf(SweepIfArgs),
    /// Two-channel Monte Carlo excess noise versus channel spacing
    SweepSpacing(SweepSpacingArgs),
    /// Fit the back-to-back noise budget to target reaches
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Overlay fragments merged over the config, key by key, in order
    #[arg(long, value_name = "FILE")]
    overlay: Vec<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Root seed for every random stream in the run
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Symbols to transmit per channel in each basis
    #[arg(long, default_value_t = 200_000)]
    symbols: usize,
    /// Output directory for records.csv and rates.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepDistanceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Shortest fiber length, km
    #[arg(long, default_value_t = 0.0, value_name = "KM")]
    min_km: f64,
    /// Longest fiber length, km
    #[arg(long, value_name = "KM")]
    max_km: f64,
    /// Distance step, km
    #[arg(long, value_name = "KM")]
    step: f64,
    /// Comma-separated channel counts (default: 1..N for the configured plan)
    #[arg(long, value_name = "LIST")]
    channels: Option<String>,
    /// Report finite-size rates (the default)
    #[arg(long, conflicts_with = "asymptotic")]
    finite: bool,
    /// Report asymptotic rates instead of finite-size
    #[arg(long)]
    asymptotic: bool,
    /// Output CSV file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepIfArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated symbol rates, Mbaud
    #[arg(long, value_name = "LIST")]
    rates: String,
    /// Lowest IF on the grid, MHz
    #[arg(long, value_name = "MHZ")]
    if_min: f64,
    /// Highest IF on the grid, MHz
    #[arg(long, value_name = "MHZ")]
    if_max: f64,
    /// IF step, MHz
    #[arg(long, value_name = "MHZ")]
    step: f64,
    /// Symbols per Monte Carlo grid point
    #[arg(long, default_value_t = 200_000)]
    symbols: usize,
    /// Root seed shared by every grid point (common random numbers)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepSpacingArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Smallest channel spacing, MHz
    #[arg(long, value_name = "MHZ")]
    spacing_min: f64,
    /// Largest channel spacing, MHz
    #[arg(long, value_name = "MHZ")]
    spacing_max: f64,
    /// Spacing step, MHz
    #[arg(long, value_name = "MHZ")]
    step: f64,
    /// Symbols per Monte Carlo grid point
    #[arg(long, default_value_t = 200_000)]
    symbols: usize,
    /// Root seed shared by every grid point and the floor run
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Targets as name=km pairs, e.g. reach_finite=45.6,reach_asympt=119.0
    #[arg(long, value_name = "LIST")]
    targets: String,
    /// Output config overlay file holding the fitted parameters
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Numerical(_) | Error::Io(_) => 3,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    configure_jobs(cli.jobs)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::SweepDistance(args) => cmd_sweep_distance(args),
        Command::SweepIf(args) => cmd_sweep_if(args),
        Command::SweepSpacing(args) => cmd_sweep_spacing(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    }
}

/// Caps the rayon pool from `--jobs` or `$FDMQKD_JOBS`; row order in every
/// sweep is fixed by the grid, not by thread completion order.
fn configure_jobs(flag: Option<usize>) -> Result<(), Error> {
    let jobs = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FDMQKD_JOBS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!("FDMQKD_JOBS must be a positive integer, got \"{v}\""))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("worker thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(())
}

/// Reads the base config and overlays, resolving them into one `SimConfig`.
/// Read and parse failures surface as configuration errors naming the file.
fn load_config(args: &ConfigArgs) -> Result<SimConfig, Error> {
    let mut fragments = Vec::with_capacity(1 + args.overlay.len());
    for path in std::iter::once(&args.config).chain(args.overlay.iter()) {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        fragments.push(config::parse_fragment(&text).map_err(|e| at_path(path, e))?);
    }
    config::resolve_fragments(&fragments)
}

fn at_path(path: &Path, err: Error) -> Error {
    match err {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Error> {
    if args.symbols == 0 {
        return Err(Error::Config("--symbols must be >= 1".into()));
    }
    let cfg = load_config(&args.config)?;
    let hash = cfg.sha256_hex();
    let (amp, phase) = fdmqkd_core::simulate_link_both_bases(
        &cfg.plan,
        &cfg.link,
        &cfg.noise,
        args.symbols,
        args.seed,
    )?;

    let mut rows = Vec::with_capacity(2 * cfg.plan.channels.len());
    for (k, ch) in cfg.plan.channels.iter().enumerate() {
        rows.push(sweep::channel_rate_from_records(&cfg, ch, Basis::Amplitude, &amp[k])?);
    }
    for (k, ch) in cfg.plan.channels.iter().enumerate() {
        rows.push(sweep::channel_rate_from_records(&cfg, ch, Basis::Phase, &phase[k])?);
    }
    let report = RateReport::from_channels(rows, true);

    fs::create_dir_all(&args.out)?;
    let records_path = args.out.join("records.csv");
    {
        let mut sink = BufWriter::new(fs::File::create(&records_path)?);
        writeln!(sink, "# config_sha256={hash}")?;
        writeln!(sink, "# seed={} symbols_per_basis={}", args.seed, args.symbols)?;
        let mut all = amp;
        all.extend(phase);
        write_records_csv(&mut sink, &all)?;
        sink.flush()?;
    }
    let rates_path = args.out.join("rates.csv");
    let comments = [
        format!("config_sha256={hash}"),
        format!("seed={} symbols_per_basis={}", args.seed, args.symbols),
    ];
    fs::write(&rates_path, report.to_csv(&comments))?;

    println!(
        "simulated {} symbols per basis on {} channel(s) at {} km, seed {}",
        args.symbols,
        cfg.plan.channels.len(),
        cfg.link.fiber_length_km,
        args.seed
    );
    for c in &report.per_channel {
        println!(
            "channel {} {:<9} t_hat {:.4}  xi_hat {:.4} SNU  skr_finite {:.4e} bit/s  skr_asympt {:.4e} bit/s",
            c.channel,
            c.basis.as_str(),
            c.t_hat,
            c.xi_hat_snu,
            c.skr_finite_bits_per_s,
            c.skr_asympt_bits_per_s
        );
    }
    println!(
        "worst-basis finite-size total: {:.4e} bit/s",
        report.worst_basis_total_bits_per_s
    );
    println!("wrote {} and {}", records_path.display(), rates_path.display());
    Ok(0)
}

fn cmd_sweep_distance(args: SweepDistanceArgs) -> Result<u8, Error> {
    let cfg = load_config(&args.config)?;
    let counts = match &args.channels {
        Some(list) => parse_usize_list(list, "--channels")?,
        None => (1..=cfg.plan.channels.len()).collect(),
    };
    let finite = !args.asymptotic;
    let sweep = sweep::sweep_distance(&cfg, args.min_km, args.max_km, args.step, &counts, finite)?;
    let comments = [
        format!("config_sha256={}", cfg.sha256_hex()),
        format!("mode={}", if finite { "finite" } else { "asymptotic" }),
    ];
    fs::write(&args.out, sweep.to_csv(&comments))?;

    println!(
        "swept {} distance(s), {} to {} km, channel counts {:?}, {} rates",
        sweep.distances_km.len(),
        args.min_km,
        args.max_km,
        counts,
        if finite { "finite-size" } else { "asymptotic" }
    );
    if let (Some(&first), Some(&last)) = (counts.first(), counts.last()) {
        if first != last {
            if let (Some(a), Some(b)) = (
                sweep.rate_at_first_distance(first),
                sweep.rate_at_first_distance(last),
            ) {
                if a > 0.0 {
                    println!(
                        "{last}-channel over {first}-channel rate at {} km: {:.3}",
                        sweep.distances_km[0],
                        b / a
                    );
                }
            }
        }
    }
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn cmd_sweep_if(args: SweepIfArgs) -> Result<u8, Error> {
    let cfg = load_config(&args.config)?;
    let rates_hz: Vec<f64> = parse_f64_list(&args.rates, "--rates")?
        .into_iter()
        .map(|mbaud| mbaud * 1e6)
        .collect();
    let sweep = sweep::sweep_if(
        &cfg,
        &rates_hz,
        args.if_min * 1e6,
        args.if_max * 1e6,
        args.step * 1e6,
        args.symbols,
        args.seed,
    )?;
    let comments = [
        format!("config_sha256={}", cfg.sha256_hex()),
        format!("seed={} symbols_per_point={}", args.seed, args.symbols),
    ];
    fs::write(&args.out, sweep.to_csv(&comments))?;

    for k in &sweep.knees {
        match k.knee_if_hz {
            Some(f) => println!(
                "{} Mbaud: plateau xi {:.4} SNU, knee at {:.1} MHz ({:.2}x the symbol rate)",
                k.symbol_rate_hz / 1e6,
                k.plateau_xi_snu,
                f / 1e6,
                f / k.symbol_rate_hz
            ),
            None => println!(
                "{} Mbaud: plateau xi {:.4} SNU, no knee within the swept grid",
                k.symbol_rate_hz / 1e6,
                k.plateau_xi_snu
            ),
        }
    }
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn cmd_sweep_spacing(args: SweepSpacingArgs) -> Result<u8, Error> {
    let cfg = load_config(&args.config)?;
    let sweep = sweep::sweep_spacing(
        &cfg,
        args.spacing_min * 1e6,
        args.spacing_max * 1e6,
        args.step * 1e6,
        args.symbols,
        args.seed,
    )?;
    let comments = [
        format!("config_sha256={}", cfg.sha256_hex()),
        format!("seed={} symbols_per_point={}", args.seed, args.symbols),
    ];
    fs::write(&args.out, sweep.to_csv(&comments))?;

    println!(
        "single-channel floor: xi {:.4} SNU at IF {} MHz",
        sweep.floor_xi_snu,
        sweep.anchor_if_hz / 1e6
    );
    match sweep.crossing(0.1) {
        Some(f) => println!(
            "neighbor-induced excess falls below 10% of the floor at {} MHz spacing",
            f / 1e6
        ),
        None => println!("neighbor-induced excess stayed above 10% of the floor everywhere"),
    }
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<u8, Error> {
    let targets = parse_targets(&args.targets)?;
    let cfg = load_config(&args.config)?;
    let outcome = sweep::calibrate(&cfg, &targets)?;
    fs::write(
        &args.out,
        config::calibration_overlay_text(outcome.excess_noise_floor_snu, outcome.nu_scale),
    )?;
    print!("{}", outcome.report_text());
    println!("wrote overlay {}", args.out.display());
    if outcome.feasible {
        Ok(0)
    } else {
        eprintln!("calibration infeasible: a best-fit residual exceeds 10% of its target");
        Ok(4)
    }
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>, Error> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<usize>().map_err(|_| {
            Error::Config(format!("{what} entry \"{part}\" is not a positive integer"))
        })?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{what} must list at least one value")));
    }
    Ok(out)
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, Error> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<f64>()
                .map_err(|_| Error::Config(format!("{what} entry \"{part}\" is not a number")))?,
        );
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{what} must list at least one value")));
    }
    Ok(out)
}

fn parse_targets(s: &str) -> Result<Vec<(String, f64)>, Error> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, val) = part.split_once('=').ok_or_else(|| {
            Error::Config(format!("--targets entry \"{part}\" must look like name=km"))
        })?;
        let km = val.trim().parse::<f64>().map_err(|_| {
            Error::Config(format!(
                "--targets entry \"{part}\": \"{}\" is not a number",
                val.trim()
            ))
        })?;
        out.push((name.trim().to_string(), km));
    }
    if out.is_empty() {
        return Err(Error::Config(
            "--targets is empty; expected name=km[,name=km]".into(),
        ));
    }
    Ok(out)
}
