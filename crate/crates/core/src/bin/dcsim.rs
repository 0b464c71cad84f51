use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dcsim::config::{load_config, parse_list, Overrides};
use dcsim::experiment::{run_experiment, ExperimentPlan, PointResult};
use dcsim::{Mode, SimError, SimTime, SweepSpec};

/// LTE / mmWave mobility simulator: dual connectivity versus hard handover.
#[derive(Parser, Debug)]
#[command(name = "dcsim", version)]
struct Cli {
    /// Mobility scheme to simulate.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Run both DC and HH with the same seeds.
    #[arg(long)]
    paired: bool,
    /// Configuration file (TOML, flat keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file; overrides the one named in the configuration.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs per configuration and mode.
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    x2_latency_ms: Option<f64>,
    #[arg(long)]
    s1_latency_ms: Option<f64>,
    /// UE speed in m/s.
    #[arg(long)]
    ue_speed: Option<f64>,
    /// Comma-separated X2 latencies in ms; without a value: 0.1,1,10.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    sweep_x2: Option<String>,
    /// Comma-separated UE speeds in m/s; without a value: 2,4,8,16.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    sweep_speed: Option<String>,
    /// Run length; defaults to the time the UE needs to cover its path.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write the processed-event log of every run.
    #[arg(long)]
    trace: bool,
    /// Write one record per packet.
    #[arg(long)]
    packet_log: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<Vec<PointResult>, SimError> {
    let overrides = Overrides {
        mode: cli.mode,
        scenario: cli.scenario.clone(),
        seed: cli.seed,
        runs: cli.runs,
        x2_latency_ms: cli.x2_latency_ms,
        s1_latency_ms: cli.s1_latency_ms,
        ue_speed: cli.ue_speed,
        duration_s: cli.duration_s,
    };
    let params = load_config(cli.config.as_deref(), &overrides)?;
    let label = cli
        .config
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "default".to_string(), |s| s.to_string_lossy().into_owned());

    let mut plan = if cli.sweep_x2.is_some() || cli.sweep_speed.is_some() {
        let defaults = SweepSpec::default();
        let d_x2_values = match cli.sweep_x2.as_deref() {
            Some("") => defaults.d_x2_values,
            Some(list) => parse_list("sweep-x2", list)?
                .into_iter()
                .map(|ms| {
                    if ms.is_finite() && ms >= 0.0 {
                        Ok(SimTime::from_ms_f64(ms))
                    } else {
                        Err(SimError::Config {
                            key: "sweep-x2".into(),
                            reason: format!("latencies must be >= 0, got {ms}"),
                        })
                    }
                })
                .collect::<Result<_, _>>()?,
            None => vec![params.d_x2],
        };
        let speed_values = match cli.sweep_speed.as_deref() {
            Some("") => defaults.speed_values,
            Some(list) => parse_list("sweep-speed", list)?,
            None => vec![params.ue_speed],
        };
        let sweep = SweepSpec {
            d_x2_values,
            speed_values,
        };
        ExperimentPlan::sweep(&label, params, &sweep, cli.paired)?
    } else {
        ExperimentPlan::single(&label, params, cli.paired)
    };
    plan.out_dir = Some(cli.out.clone());
    plan.options.trace_events = cli.trace;
    plan.options.keep_packets = cli.packet_log;
    run_experiment(&plan)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok(points) => {
            println!(
                "{:<36} {:<4} {:>4} {:>12} {:>12} {:>12} {:>12}",
                "config", "mode", "runs", "tput_mbps", "lat_ms", "max_lat_ms", "rrc_B_per_s"
            );
            for p in &points {
                for m in &p.modes {
                    let a = &m.aggregate;
                    println!(
                        "{:<36} {:<4} {:>4} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
                        p.label,
                        m.mode.as_str(),
                        a.runs,
                        a.mean("gross_throughput_mbps"),
                        a.mean("mean_latency_ms"),
                        a.mean("max_latency_ms"),
                        a.mean("rrc_air_bytes_per_s"),
                    );
                }
            }
            println!("results written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dcsim: {e}");
            match e {
                SimError::Config { .. } | SimError::Parse { .. } | SimError::Scenario(_) => ExitCode::from(2),
                SimError::Conservation(_) => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
