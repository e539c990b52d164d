//! Experiment driver CLI: dataset generation, training, NMSE evaluation and
//! ROC sweeps, all reproducible from seeds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lamp::error::{Error, Result};
use lamp::experiment::{
    apply_config_entry, gen_dataset, parse_config_text, run_eval, run_roc, write_eval_csv,
    write_roc_csv, Algorithm, ExperimentSpec,
};
use lamp::fal::{load_dataset, load_model, save_dataset, save_model, train, TrainingConfig};
use lamp::sysmodel::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "lamp",
    about = "List-AMP activity detection and channel estimation simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// System-model settings shared by the experiment subcommands. Values from
/// --config are applied first; explicit flags override them.
#[derive(Args)]
struct ModelOpts {
    /// Flat key-value config file (key = value per line)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of potential devices N
    #[arg(long)]
    n_devices: Option<usize>,
    /// Pilot sequence length M
    #[arg(long)]
    pilot_length: Option<usize>,
    /// Per-device transmission probability rho
    #[arg(long)]
    activity_prob: Option<f64>,
    /// Master seed for the Monte-Carlo trials
    #[arg(long)]
    seed: Option<u64>,
    /// Receive SNR in dB
    #[arg(long)]
    snr_db: Option<f64>,
    /// Pilot quantizer resolution in bits
    #[arg(long, conflicts_with = "unquantized")]
    bits: Option<u32>,
    /// Use unquantized (full-resolution) pilots
    #[arg(long)]
    unquantized: bool,
    /// Seed of the shared pilot codebook
    #[arg(long)]
    pilot_seed: Option<u64>,
    /// Redraw the pilot matrix inside every trial instead of sharing one
    #[arg(long)]
    per_trial_pilots: bool,
}

impl ModelOpts {
    fn build(&self) -> Result<ExperimentConfig> {
        // defaults: the N=150, M=30, rho=0.1, 3-bit, 40 dB reference setup
        let mut cfg = ExperimentConfig::new(150, 30, 0.1);
        cfg.quant_bits = Some(3);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            for (k, v) in parse_config_text(&text)? {
                apply_config_entry(&mut cfg, &k, &v)?;
            }
        }
        if let Some(n) = self.n_devices {
            cfg.n_devices = n;
        }
        if let Some(m) = self.pilot_length {
            cfg.pilot_length = m;
        }
        if let Some(rho) = self.activity_prob {
            cfg.activity_prob = rho;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(snr) = self.snr_db {
            cfg.snr_db = snr;
        }
        if let Some(bits) = self.bits {
            cfg.quant_bits = Some(bits);
        }
        if self.unquantized {
            cfg.quant_bits = None;
        }
        if let Some(ps) = self.pilot_seed {
            apply_config_entry(&mut cfg, "pilot_seed", &ps.to_string())?;
        }
        if self.per_trial_pilots {
            apply_config_entry(&mut cfg, "pilot_mode", "per-trial")?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training dataset from seeded Monte-Carlo trials
    GenDataset {
        #[command(flatten)]
        model: ModelOpts,
        /// Number of trials (= dataset rows)
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Unconstrained recursion length feeding the features/labels
        #[arg(long, default_value_t = 20)]
        amp_iters: usize,
        /// Output dataset file
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the false-alarm-likelihood network on a dataset
    Train {
        /// Input dataset file
        #[arg(long)]
        dataset: PathBuf,
        /// Output model file
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long, default_value_t = 600)]
        batch_size: usize,
        #[arg(long, default_value_t = 100)]
        max_epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        /// Epochs without validation improvement before stopping
        #[arg(long, default_value_t = 10)]
        patience: usize,
        /// Weight-initialization / shuffling seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo NMSE evaluation, reported at selected iteration counts
    Eval {
        #[command(flatten)]
        model: ModelOpts,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Algorithm: amp-mmse, ga-lamp or dl-lamp
        #[arg(long, default_value = "amp-mmse")]
        algorithm: String,
        /// Comma-separated iteration counts to report
        #[arg(long, default_value = "3,5,10,20", value_delimiter = ',')]
        iters: Vec<usize>,
        /// Trained model file (dl-lamp)
        #[arg(long)]
        model_file: Option<PathBuf>,
        /// Replace the learned selector by the genie (dl-lamp only)
        #[arg(long)]
        genie: bool,
        /// Output CSV file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROC sweep: detection rates over a magnitude-threshold grid
    Roc {
        #[command(flatten)]
        model: ModelOpts,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Algorithm: amp-mmse, ga-lamp or dl-lamp
        #[arg(long, default_value = "amp-mmse")]
        algorithm: String,
        /// Recursion length before thresholding
        #[arg(long, default_value_t = 100)]
        iters: usize,
        /// Trained model file (dl-lamp)
        #[arg(long)]
        model_file: Option<PathBuf>,
        /// Replace the learned selector by the genie (dl-lamp only)
        #[arg(long)]
        genie: bool,
        /// Smallest threshold of the geometric grid
        #[arg(long, default_value_t = 1e-4)]
        delta_min: f64,
        /// Largest threshold of the geometric grid
        #[arg(long, default_value_t = 2.0)]
        delta_max: f64,
        /// Number of grid points
        #[arg(long, default_value_t = 80)]
        delta_count: usize,
        /// Output CSV file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn build_spec(
    model: &ModelOpts,
    algorithm: &str,
    iterations: Vec<usize>,
    trials: u64,
    model_file: Option<PathBuf>,
    genie: bool,
    out: Option<PathBuf>,
) -> Result<ExperimentSpec> {
    let spec = ExperimentSpec {
        config: model.build()?,
        algorithm: algorithm.parse::<Algorithm>()?,
        iterations,
        trials,
        model_path: model_file,
        output_path: out,
        genie,
    };
    spec.validate()?;
    Ok(spec)
}

fn load_model_if_needed(spec: &ExperimentSpec) -> Result<Option<lamp::fal::FalNetParams>> {
    match (&spec.model_path, spec.algorithm, spec.genie) {
        (Some(path), Algorithm::DlLamp, false) => Ok(Some(load_model(path)?)),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset {
            model,
            trials,
            amp_iters,
            out,
        } => {
            let cfg = model.build()?;
            let dataset = gen_dataset(&cfg, trials, amp_iters)?;
            save_dataset(&dataset, &out)?;
            println!(
                "wrote {} rows ({} features + {} labels) to {}",
                trials,
                2 * cfg.pilot_length + cfg.n_devices,
                cfg.n_devices,
                out.display()
            );
        }
        Command::Train {
            dataset,
            out,
            learning_rate,
            batch_size,
            max_epochs,
            validation_fraction,
            patience,
            seed,
        } => {
            let ds = load_dataset(&dataset)?;
            let tcfg = TrainingConfig {
                learning_rate,
                batch_size,
                max_epochs,
                validation_fraction,
                patience,
                seed,
            };
            let (params, train_loss, val_loss) = train(&ds, &tcfg)?;
            save_model(&params, &out)?;
            println!(
                "trained {:?}: train loss {train_loss:.6e}, validation loss {val_loss:.6e}; model written to {}",
                params.layer_dims,
                out.display()
            );
        }
        Command::Eval {
            model,
            trials,
            algorithm,
            iters,
            model_file,
            genie,
            out,
        } => {
            let spec = build_spec(&model, &algorithm, iters, trials, model_file, genie, out)?;
            let net = load_model_if_needed(&spec)?;
            let rows = run_eval(&spec, net.as_ref())?;
            let mut w = out_writer(&spec.output_path)?;
            write_eval_csv(&mut w, &rows, &spec)?;
            w.flush()?;
        }
        Command::Roc {
            model,
            trials,
            algorithm,
            iters,
            model_file,
            genie,
            delta_min,
            delta_max,
            delta_count,
            out,
        } => {
            if !(delta_min > 0.0) || delta_max < delta_min || delta_count < 1 {
                return Err(Error::InvalidInput(
                    "need 0 < delta_min <= delta_max and delta_count >= 1".into(),
                ));
            }
            let spec = build_spec(&model, &algorithm, vec![iters], trials, model_file, genie, out)?;
            let net = load_model_if_needed(&spec)?;
            let thresholds: Vec<f64> = if delta_count == 1 {
                vec![delta_min]
            } else {
                let ratio = (delta_max / delta_min).powf(1.0 / (delta_count - 1) as f64);
                (0..delta_count)
                    .map(|i| delta_min * ratio.powi(i as i32))
                    .collect()
            };
            let points = run_roc(&spec, net.as_ref(), &thresholds)?;
            let mut w = out_writer(&spec.output_path)?;
            write_roc_csv(&mut w, &points, &spec)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
