use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ids_core::eval::summary_table;
use ids_core::pipeline::{cmd_eval, cmd_predict, cmd_prep, cmd_synth, cmd_train};
use ids_core::synth::SynthSpec;
use ids_core::{IdsError, LeakageMode, PipelineConfig};

#[derive(Parser)]
#[command(name = "ids", version, about = "Intrusion-detection pipeline on benchmark flow CSVs")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a raw CSV: drop non-finite and duplicate rows, merge classes.
    Prep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit the transform chain and a model; writes model.json, chain.json
    /// and train_report.json into --out.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Cross-validate one or more models and write a JSON report.
    Eval {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Predict classes for a CSV with a stored model and chain.
    Predict {
        #[arg(long = "model-file")]
        model_file: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a Gaussian-blob dataset with imbalanced classes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Relative class sizes, e.g. 100,10,1.
        #[arg(long, value_delimiter = ',', default_value = "100,10,1")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        dims: usize,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bundled profile name or profile file; overrides the config.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    leakage: Option<LeakageMode>,
    /// dt, rf, et or gbt; eval also takes a comma list or `all`.
    #[arg(long)]
    model: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig, IdsError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.profile {
            cfg.profile = p.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.leakage {
            cfg.leakage = l;
        }
        if let Some(m) = &self.model {
            cfg.model.kind = m.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), IdsError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(IdsError::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| IdsError::Invariant(e.to_string()))?;
    }
    match cli.command {
        Command::Prep { run } => {
            let cfg = run.config()?;
            let r = cmd_prep(&cfg, &run.input, &run.out)?;
            println!(
                "{} rows written to {} ({} dropped non-finite, {} dropped duplicate)",
                r.rows_out,
                run.out.display(),
                r.provenance.rows_dropped_nan_inf,
                r.provenance.rows_dropped_duplicate
            );
            for (class, count) in &r.class_histogram {
                println!("  {class:<28} {count}");
            }
        }
        Command::Train { run } => {
            let cfg = run.config()?;
            let o = cmd_train(&cfg, &run.input, &run.out)?;
            println!(
                "{} on {} rows ({} after oversampling), stages: {}",
                o.report.model.kind,
                o.report.metadata.n_rows,
                o.report.rows_after_oversample,
                o.report.stages.join(" -> ")
            );
            if let Some(p) = &o.report.pca {
                println!("reduction ratio {}/{} = {:.4}", p.k, p.d_in, p.reduction_ratio);
            }
            println!("training accuracy {:.4}", o.report.training_accuracy);
            show(&o.model_path);
            show(&o.chain_path);
            show(&o.report_path);
        }
        Command::Eval { run } => {
            let cfg = run.config()?;
            let report = cmd_eval(&cfg, &run.input, &run.out)?;
            print!("{}", summary_table(&report));
            show(&run.out);
        }
        Command::Predict {
            model_file,
            chain,
            input,
            out,
        } => {
            let o = cmd_predict(&model_file, &chain, &input, &out)?;
            println!(
                "{} rows predicted, {} skipped",
                o.rows_predicted,
                o.rows_skipped.len()
            );
            show(&out);
        }
        Command::Synth {
            out,
            ratios,
            rows,
            dims,
            separation,
            spread,
            seed,
        } => {
            let spec = SynthSpec {
                ratios,
                rows,
                dims,
                separation,
                spread,
                seed,
            };
            let t = cmd_synth(&spec, &out)?;
            println!("{} rows x {} features", t.row_count(), t.features.cols());
            show(&out);
        }
    }
    Ok(())
}

fn show(p: &Path) {
    println!("wrote {}", p.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IDS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
