use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spider_em::algorithms::{AlgorithmKind, StepSchedule};
use spider_em::data::{
    gen_multivariate_mixture, gen_scalar_mixture, load_dataset, pca_apply, pca_fit, remove_constant_features,
    save_dataset, FileFormat, ScalarMixtureSpec,
};
use spider_em::SamplingMode;
use spider_em_harness::checks::run_suite;
use spider_em_harness::complexity::{BatchRule, ComplexityConfig};
use spider_em_harness::config::parse_cadence;
use spider_em_harness::experiment::seed_offset_from_env;
use spider_em_harness::{
    estimate_complexity, run_experiment, summarize_quantiles, ExperimentConfig, HarnessError, Settings,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "spider-em", version, about = "Variance-reduced EM experiments")]
struct Cli {
    /// Concurrent runs (each run is single-threaded).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm and seed of a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// First-hitting-time scaling study on the scalar two-component mixture.
    Complexity {
        #[arg(long, default_value = "spider-em")]
        algo: String,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 10_000, 100_000])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 2.5e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        /// Minibatch size; `auto` is ⌈√n/20⌉.
        #[arg(long, default_value = "auto")]
        batch: String,
        /// Inner-loop length; defaults to ⌈n/b⌉.
        #[arg(long)]
        k_in: Option<u64>,
        #[arg(long, default_value_t = 500)]
        cap_epochs: u64,
        /// When ‖h‖² is checked: iterate, epoch.
        #[arg(long, default_value = "iterate")]
        cadence: String,
        #[arg(long, default_value = "out/complexity")]
        out: PathBuf,
    },
    /// Run an algorithm grid and write per-epoch quantiles for each algorithm.
    Compare {
        config: PathBuf,
        /// Comma-separated algorithms, replacing those of the config.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<String>>,
        #[arg(long)]
        epochs: Option<u64>,
        /// Use seeds 0..SEEDS.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 0.9])]
        quantiles: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate or preprocess a dataset file.
    GenData {
        /// scalar, mixture, or file (with --input).
        #[arg(long, default_value = "mixture")]
        kind: String,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 12)]
        components: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        input_format: String,
        #[arg(long)]
        drop_constant: bool,
        #[arg(long)]
        pca: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// csv, csv-header or packed.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run invariant suites: sampler, equivalence, gradient, all.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn arg_error(field: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

fn dispatch(cli: Cli) -> Result<u8, HarnessError> {
    let settings = Settings {
        seed_offset: seed_offset_from_env()?,
        jobs: cli.jobs,
    };
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(&cfg, out);
            let output = run_experiment(&cfg, &dir, settings)?;
            let rate = output.divergence_rate();
            println!("{} runs written to {} (divergence rate {rate})", output.records.len(), dir.display());
            Ok(if rate > cfg.run.max_divergence_rate { EXIT_DIVERGED } else { 0 })
        }
        Command::Compare {
            config,
            algos,
            epochs,
            seeds,
            quantiles,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(a) = algos {
                cfg.run.algorithms = a;
            }
            if let Some(e) = epochs {
                cfg.run.epochs = Some(e);
                cfg.run.k_max = None;
                cfg.run.k_out = None;
            }
            if let Some(s) = seeds {
                cfg.run.seeds = None;
                cfg.run.seed_count = Some(s);
            }
            cfg.validate()?;
            let dir = output_dir(&cfg, out);
            let output = run_experiment(&cfg, &dir, settings)?;
            for kind in cfg.algorithms() {
                let paths: Vec<PathBuf> = output.traces_of(kind).into_iter().map(Path::to_path_buf).collect();
                if paths.len() < 2 {
                    continue;
                }
                let table = summarize_quantiles(&paths, &quantiles)?;
                let path = dir.join(format!("quantiles_{}.csv", kind.as_str()));
                table.write_csv(&path)?;
                println!("{}", path.display());
            }
            let rate = output.divergence_rate();
            Ok(if rate > cfg.run.max_divergence_rate { EXIT_DIVERGED } else { 0 })
        }
        Command::Complexity {
            algo,
            n,
            trials,
            epsilon,
            gamma,
            batch,
            k_in,
            cap_epochs,
            cadence,
            out,
        } => {
            let algorithm: AlgorithmKind = algo.parse().map_err(|_| arg_error("--algo", format!("unknown '{algo}'")))?;
            let batch = match batch.as_str() {
                "auto" => BatchRule::SqrtOver20,
                b => BatchRule::Fixed(
                    b.parse()
                        .ok()
                        .filter(|b| *b > 0)
                        .ok_or_else(|| arg_error("--batch", "auto or a positive integer"))?,
                ),
            };
            let cadence = parse_cadence(&cadence).ok_or_else(|| arg_error("--cadence", "iterate or epoch"))?;
            let step = StepSchedule::Constant(gamma);
            step.validate().map_err(|e| arg_error("--gamma", e.to_string()))?;
            let cfg = ComplexityConfig {
                algorithm,
                mixture: ScalarMixtureSpec::default(),
                batch,
                k_in,
                step,
                sampling: SamplingMode::WithReplacement,
                cap_epochs,
                cadence,
                seed_offset: settings.seed_offset,
                jobs: settings.jobs,
                ..Default::default()
            };
            let est = estimate_complexity(&cfg, epsilon, &n, trials)?;
            std::fs::create_dir_all(&out)?;
            est.write_csv(&out.join("complexity.csv"), &out.join("complexity_trials.csv"))?;
            for r in &est.records {
                println!(
                    "n={} b={} hit_rate={} median_k_opt={:?} median_k_ce={:?}",
                    r.n, r.b, r.hit_rate, r.median_k_opt, r.median_k_ce
                );
            }
            if let Some(s) = est.k_ce_slope() {
                println!("log-log slope of median K_CE - n: {s:.3}");
            }
            Ok(0)
        }
        Command::GenData {
            kind,
            n,
            components,
            dim,
            separation,
            seed,
            input,
            input_format,
            drop_constant,
            pca,
            out,
            format,
        } => {
            let seed = seed.wrapping_add(settings.seed_offset);
            let mut raw = match (kind.as_str(), input) {
                ("scalar", None) => gen_scalar_mixture(n, &ScalarMixtureSpec::default(), seed)?,
                ("mixture", None) => gen_multivariate_mixture(n, components, dim, separation, seed)?,
                ("file", Some(path)) => load_dataset(&path, input_format.parse()?)?,
                ("file", None) => return Err(arg_error("--input", "required with --kind file")),
                (_, Some(_)) => return Err(arg_error("--input", "only valid with --kind file")),
                (other, None) => return Err(arg_error("--kind", format!("unknown '{other}'"))),
            };
            if drop_constant {
                let (kept, removed) = remove_constant_features(&raw)?;
                println!("removed {} constant features", removed.len());
                raw = kept;
            }
            if let Some(d) = pca {
                let t = pca_fit(&raw, d)?;
                raw = pca_apply(&t, &raw)?;
            }
            let format: FileFormat = format.parse()?;
            save_dataset(&raw, &out, format)?;
            println!("{} rows x {} columns -> {}", raw.n(), raw.dim(), out.display());
            Ok(0)
        }
        Command::Check { suite } => {
            let reports = run_suite(&suite)?;
            let mut ok = true;
            for r in &reports {
                ok &= r.passed();
                println!(
                    "{} {}: max deviation {:e} (tolerance {:e}) {}",
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.suite,
                    r.max_deviation,
                    r.tolerance,
                    r.detail
                );
            }
            Ok(if ok { 0 } else { EXIT_CHECK_FAILED })
        }
    }
}

fn output_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}
