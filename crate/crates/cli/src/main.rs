use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use sfi_lee::eval::evaluate_at_sf;
use sfi_lee::harness::config::ExperimentConfig;
use sfi_lee::harness::dataset::{extract_segments, Dataset};
use sfi_lee::harness::experiment::{load_model, run_perturbation_knob, run_sigma_sweep, ExperimentOutput};
use sfi_lee::harness::report::{correlations, emit_report, rows_from_csv, ReportRow};
use sfi_lee::harness::wav::{read_wav, write_wav};
use sfi_lee::harness::{configure_threads, HarnessError};
use sfi_lee::metrics::{compute_metric, MetricKind};
use sfi_lee::model::{init_weights, save_weights};
use sfi_lee::resample::{resample_to, WindowSpec};

/// Local equivariance error metrics for sampling-frequency-independent
/// separation models.
#[derive(Parser)]
#[command(name = "sfi-lee", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample a WAV file to a new rate.
    Resample {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        rate: f64,
        /// Window support in samples.
        #[arg(long, default_value_t = 24)]
        window: usize,
    },
    /// LEE metrics of one model at its trained rate.
    Metrics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Sweep the initial MGF bandwidth over the configured grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Inject mask non-equivariance of strength λ.
    Knob {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated λ values; defaults to `knob_lambdas`.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        lambdas: Option<Vec<f64>>,
    },
    /// SI-SDR of one model at a test rate.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rate: f64,
    },
    /// Rebuild correlations, JSON and plots from a rows CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded initial weights for the configured model.
    InitWeights {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// σ_init in multiples of π; defaults to the first grid value.
        #[arg(long)]
        sigma_pi: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    configure_threads()?;
    match cmd {
        Command::Resample {
            input,
            output,
            rate,
            window,
        } => {
            let window = WindowSpec::hann(window).map_err(|e| HarnessError::Config(e.to_string()))?;
            if !(rate.is_finite() && rate > 0.0) {
                return Err(HarnessError::Config(format!("rate must be positive, got {rate}")));
            }
            let x = read_wav(&input)?;
            let y = resample_to(&x, rate, window)?;
            write_wav(&output, &y)?;
            println!("{} samples at {} Hz -> {} samples at {rate} Hz", x.len(), x.sample_rate(), y.len());
        }
        Command::Metrics { config, weights } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model = load_model(&cfg, &weights)?;
            let dataset = Dataset::from_config(&cfg, cfg.synthetic)?;
            let seg = extract_segments(&dataset.scenes_at(cfg.trained_rate, cfg.window()?)?, cfg.segment_seconds)?;
            let settings = cfg.estimator_settings();
            let mut results = Vec::new();
            for kind in MetricKind::SFI {
                let r = compute_metric(&model, kind, &seg.mixtures(), &settings)?;
                println!("{}\t{}", kind.name(), r.aggregate);
                results.push(r);
            }
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("metrics.json");
            let json = serde_json::json!({
                "weights": weights,
                "segments": seg.names,
                "skipped": seg.skipped,
                "metrics": results,
            });
            std::fs::write(&path, serde_json::to_string_pretty(&json).map_err(|e| HarnessError::Report(e.to_string()))?)?;
            info!("wrote {}", path.display());
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            finish(&cfg, run_sigma_sweep(&cfg)?)?;
        }
        Command::Knob { config, lambdas } => {
            let cfg = ExperimentConfig::load(&config)?;
            let lambdas = lambdas.unwrap_or_else(|| cfg.knob_lambdas.clone());
            finish(&cfg, run_perturbation_knob(&cfg, &lambdas)?)?;
        }
        Command::Eval { config, weights, rate } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model = load_model(&cfg, &weights)?;
            let dataset = Dataset::from_config(&cfg, cfg.synthetic)?;
            let window = cfg.window()?;
            let at = |r: f64| -> Result<f64, HarnessError> {
                let seg = extract_segments(&dataset.scenes_at(r, window)?, cfg.segment_seconds)?;
                Ok(evaluate_at_sf(&model, &seg.scenes, r, window)?)
            };
            let trained = at(cfg.trained_rate)?;
            let test = at(rate)?;
            println!("SI-SDR at {} Hz\t{trained}", cfg.trained_rate);
            println!("SI-SDR at {rate} Hz\t{test}");
            println!("degradation\t{}", trained - test);
        }
        Command::Report { input, out } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| HarnessError::Data(format!("cannot read {}: {e}", input.display())))?;
            let rows = rows_from_csv(&text)?;
            let mut cs = Vec::new();
            let mut experiments: Vec<&str> = rows.iter().map(|r| r.experiment.as_str()).collect();
            experiments.dedup();
            for exp in experiments {
                let part: Vec<ReportRow> = rows.iter().filter(|r| r.experiment == exp).cloned().collect();
                cs.extend(correlations(&part, exp == "knob"));
            }
            for p in emit_report(&rows, &cs, &out)? {
                println!("{}", p.display());
            }
        }
        Command::InitWeights {
            config,
            seed,
            sigma_pi,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let sigma = sigma_pi.unwrap_or(cfg.sigma_init_pi[0]) * std::f64::consts::PI;
            let bundle = init_weights(&cfg.model_spec(sigma), seed)?;
            save_weights(&out, &bundle)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn finish(cfg: &ExperimentConfig, out: ExperimentOutput) -> Result<(), HarnessError> {
    let dir = &cfg.output_dir;
    emit_report(&out.rows, &out.correlations, dir)?;
    std::fs::write(
        dir.join("dataset.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "dataset": out.dataset,
            "skipped": out.skipped,
        }))
        .map_err(|e| HarnessError::Report(e.to_string()))?,
    )?;
    for s in &out.skipped {
        println!("skipped {} ({:.2} s)", s.name, s.seconds);
    }
    for c in &out.correlations {
        let against = match c.test_rate {
            Some(r) => format!("degradation at {r} Hz"),
            None => "lambda".to_string(),
        };
        println!("{}\t{} vs {against}\trho = {:.4}", out.experiment, c.metric, c.rho);
    }
    println!("{} rows written to {}", out.rows.len(), dir.join("rows.csv").display());
    Ok(())
}
