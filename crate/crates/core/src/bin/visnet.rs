//! Command-line front end: resolves a run configuration from defaults,
//! an optional config file and flags, sweeps the seeds and exports the
//! per-run metrics.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use visnet::config::{parse_area, ScenarioConfig};
use visnet::experiment::{disconnected_runs, run_experiment_detailed};
use visnet::metrics::{self, ExportFormat, RunMetrics};

#[derive(Parser, Debug)]
#[command(
    name = "visnet",
    version,
    about = "Camera-network image-transfer simulator sweeping three \
             scenario policies: first-listed cover set with greedy \
             routing, quality-selected cover set, and quality-selected \
             cover set with two-hop multi-path routing"
)]
struct Cli {
    /// Flat `key = value` file applied between defaults and flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Scenario policy, 1 through 3.
    #[arg(long)]
    scenario: Option<u8>,

    /// Number of cameras deployed.
    #[arg(long)]
    nodes: Option<u32>,

    /// Deployment area in meters, e.g. 2000x2000.
    #[arg(long, value_name = "WxH")]
    area: Option<String>,

    /// Radio range in meters.
    #[arg(long)]
    range: Option<f64>,

    /// First seed of the sweep.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of seeds swept (seed, seed+1, ...).
    #[arg(long)]
    runs: Option<u32>,

    /// Weight of the 2-hop path-supply ratio in the quality score.
    #[arg(long)]
    alpha: Option<f64>,

    /// Weight of the relay ratio in the quality score.
    #[arg(long)]
    beta: Option<f64>,

    /// Multiplier on the capture rate when sizing parallel paths.
    #[arg(long)]
    path_factor: Option<f64>,

    /// Images captured per detection event at a sentry.
    #[arg(long)]
    capture_rate: Option<f64>,

    /// Source images sent per activated camera and detection.
    #[arg(long)]
    images_per_burst: Option<u32>,

    /// Fraction of cover-set-capable cameras acting as sentries.
    #[arg(long)]
    sentry_fraction: Option<f64>,

    /// Width of the camera-bearing interval in radians (2*pi default).
    #[arg(long)]
    facing_spread: Option<f64>,

    /// Members below this residual energy are not activated.
    #[arg(long)]
    energy_floor: Option<f64>,

    /// Real image file to fragment and transfer instead of synthetic
    /// payloads.
    #[arg(long, value_name = "FILE")]
    image_file: Option<PathBuf>,

    /// Write the export here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Export format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Print the resolved configuration and exit without simulating.
    #[arg(long)]
    dry_run: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    /// One row per run, flat columns.
    Csv,
    /// Hierarchical JSON including per-image latencies.
    Structured,
}

/// Defaults, then the config file, then flags; later layers win.
fn resolve(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        cfg.apply_file(&text)
            .with_context(|| format!("in config file {}", path.display()))?;
    }
    if let Some(v) = cli.scenario {
        cfg.scenario = v;
    }
    if let Some(v) = cli.nodes {
        cfg.node_count = v;
    }
    if let Some(area) = &cli.area {
        let (w, h) = parse_area(area).map_err(|why| anyhow::anyhow!("--area: {why}"))?;
        cfg.area_width = w;
        cfg.area_height = h;
    }
    if let Some(v) = cli.range {
        cfg.comm_range = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.runs {
        cfg.runs = v;
    }
    if let Some(v) = cli.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = cli.beta {
        cfg.beta = v;
    }
    if let Some(v) = cli.path_factor {
        cfg.path_factor = v;
    }
    if let Some(v) = cli.capture_rate {
        cfg.capture_rate = v;
    }
    if let Some(v) = cli.images_per_burst {
        cfg.images_per_burst = v;
    }
    if let Some(v) = cli.sentry_fraction {
        cfg.sentry_fraction = v;
    }
    if let Some(v) = cli.facing_spread {
        cfg.facing_spread = v;
    }
    if let Some(v) = cli.energy_floor {
        cfg.energy_floor = v;
    }
    if let Some(path) = &cli.image_file {
        cfg.image_file = Some(path.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli)?;
    if cli.dry_run {
        println!("{cfg}");
        return Ok(());
    }

    let outputs = run_experiment_detailed(&cfg)?;
    let disconnected = disconnected_runs(&outputs);
    if disconnected > 0 {
        eprintln!(
            "warning: in {disconnected} of {} runs some cameras had no multi-hop \
             path to the sink at deployment; their losses reflect the partition",
            outputs.len(),
        );
    }
    let idle = outputs.iter().filter(|o| o.diag.detection_schedule.is_empty()).count();
    if idle > 0 {
        eprintln!(
            "warning: {idle} of {} runs scheduled no detection event (no camera \
             had a multi-member cover set, or the sentry fraction rounded to \
             zero); their metrics are all zero",
            outputs.len(),
        );
    }
    let metrics: Vec<RunMetrics> = outputs.into_iter().map(|o| o.metrics).collect();
    let format = match cli.format {
        Format::Csv => ExportFormat::Csv,
        Format::Structured => ExportFormat::Structured,
    };

    let summary = metrics::summary_table(&metrics::summarize(&metrics));
    match &cli.out {
        Some(path) => {
            metrics::export(&metrics, format, path)
                .with_context(|| format!("cannot write {}", path.display()))?;
            print!("{summary}");
            println!("{} runs written to {}", metrics.len(), path.display());
        }
        None => {
            let body = match format {
                ExportFormat::Csv => metrics::to_csv(&metrics),
                ExportFormat::Structured => metrics::to_json(&metrics),
            };
            print!("{body}");
            eprint!("{summary}");
        }
    }
    Ok(())
}
