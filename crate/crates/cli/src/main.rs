use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trussgsm_core::designgen::{filter_worst, generate_dataset, split, Dataset, DesignModel, SplitFractions};
use trussgsm_core::experiments::{dataset_mae, emit_report, load_trial_spec, per_design_mae, run_trial};
use trussgsm_core::fea::{self, ElementKind};
use trussgsm_core::formats::{load_dataset, load_truss, save_dataset, save_loss_history, write_displacements};
use trussgsm_core::gsm::{
    build_network, load_checkpoint, load_checkpoint_for, save_checkpoint, train, transfer, TrainConfig,
    ARCHITECTURE_A10, ARCHITECTURE_A11, ARCHITECTURE_A9, DEFAULT_ARCHITECTURE, DEFAULT_HEADS,
};
use trussgsm_core::model::{GraphSample, NODE_FEATURES};
use trussgsm_core::pointwise::MeanBaseline;
use trussgsm_core::{Error, Result};

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "TRUSSGSM_THREADS";

#[derive(Parser)]
#[command(name = "trussgsm", version, about = "Truss displacement surrogates: data generation, training and transfer trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample designs from a design model, solve them and write a dataset.
    Generate {
        /// Design model: dm<k>, dm<k>_endloads, tower, bridge or bridge_small.
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of designs with the largest displacement to discard.
        #[arg(long, default_value_t = 0.0)]
        filter_worst: f64,
        #[arg(long, default_value = "frame_beam")]
        element_kind: ElementKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a GSM from scratch on one or more datasets.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        /// Layer string such as `L16/C32/L2`, or one of A9, A10, A11.
        #[arg(long, default_value = DEFAULT_ARCHITECTURE)]
        arch: String,
        #[arg(long, default_value_t = DEFAULT_HEADS)]
        heads: usize,
        #[command(flatten)]
        opts: TrainOpts,
        /// Checkpoint path; the loss history goes next to it as `<out>.history.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report per-design MAE of a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Fine-tune a pre-trained checkpoint on target datasets.
    Transfer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        /// Reject the checkpoint unless it has this architecture.
        #[arg(long)]
        arch: Option<String>,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a trial described by a TOML spec and write its report files.
    Trial {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a single truss description and write joint displacements.
    Fea {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the element kind stored in the file.
        #[arg(long)]
        element_kind: Option<ElementKind>,
    },
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    wd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.68,0.12,0.20")]
    split: String,
    /// Reject unknown fields in dataset files.
    #[arg(long)]
    strict: bool,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            weight_decay: self.wd,
            seed: self.seed,
        }
    }

    fn fractions(&self) -> Result<SplitFractions> {
        let parts: Vec<f64> = self
            .split
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidInput(format!("bad --split {:?}", self.split)))?;
        match parts.as_slice() {
            [a, b, c] => SplitFractions::new(*a, *b, *c),
            _ => Err(Error::InvalidInput("--split needs three comma-separated fractions".into())),
        }
    }

    /// Loads and merges the datasets, then splits them with the seed.
    fn load_split(&self, paths: &[PathBuf]) -> Result<(Dataset, Dataset, Dataset)> {
        let parts = paths
            .iter()
            .map(|p| load_dataset(p, self.strict))
            .collect::<Result<Vec<_>>>()?;
        let merged = Dataset::merge(&parts)?;
        let s = split(&merged, self.fractions()?, self.seed);
        Ok((s.train, s.val, s.test))
    }
}

/// Expands the named architectures A9, A10 and A11; anything else is a layer string.
fn resolve_architecture(arch: &str) -> &str {
    match arch {
        "A9" => ARCHITECTURE_A9,
        "A10" => ARCHITECTURE_A10,
        "A11" => ARCHITECTURE_A11,
        other => other,
    }
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".history.csv");
    PathBuf::from(name)
}

fn report_test(net: &trussgsm_core::gsm::GsmNetwork, test: &[GraphSample]) -> Result<()> {
    if test.is_empty() {
        println!("test set is empty");
    } else {
        println!("test MAE {:.3e} cm over {} designs", dataset_mae(&net.predict_many(test)?, test)?, test.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            model,
            n,
            seed,
            filter_worst: fraction,
            element_kind,
            out,
        } => {
            let model = DesignModel::by_name(&model)?;
            let (data, summary) = generate_dataset(&model, n, seed, element_kind)?;
            let solved = data.len();
            let data = if fraction > 0.0 { filter_worst(&data, fraction)? } else { data };
            save_dataset(&out, &data)?;
            println!(
                "generated {} dropped-mechanism {} filtered {} written {}",
                summary.generated,
                summary.dropped_mechanism,
                solved - data.len(),
                data.len()
            );
        }
        Command::Train {
            data,
            arch,
            heads,
            opts,
            out,
        } => {
            let (tr, va, te) = opts.load_split(&data)?;
            let mut net = build_network(resolve_architecture(&arch), heads, NODE_FEATURES, opts.seed)?;
            println!("{net}: {} train / {} validation / {} test designs", tr.len(), va.len(), te.len());
            let history = train(&mut net, &tr.samples, &va.samples, &opts.config())?;
            save_checkpoint(&net, &out)?;
            save_loss_history(history_path(&out), &history)?;
            report_test(&net, &te.samples)?;
        }
        Command::Evaluate {
            ckpt,
            data,
            out,
            strict,
        } => {
            let net = load_checkpoint(&ckpt)?;
            let data = load_dataset(&data, strict)?;
            evaluate(&net, &data.samples, &out)?;
        }
        Command::Transfer {
            ckpt,
            data,
            arch,
            opts,
            out,
        } => {
            let mut net = match &arch {
                Some(a) => load_checkpoint_for(&ckpt, resolve_architecture(a))?,
                None => load_checkpoint(&ckpt)?,
            };
            let (tr, va, te) = opts.load_split(&data)?;
            let history = transfer(&mut net, &tr.samples, &va.samples, &opts.config())?;
            save_checkpoint(&net, &out)?;
            save_loss_history(history_path(&out), &history)?;
            report_test(&net, &te.samples)?;
        }
        Command::Trial { spec, out } => {
            let spec = load_trial_spec(&spec)?;
            let report = run_trial(&spec)?;
            emit_report(&[report], &out)?;
            println!("trial {} report written to {}", spec.trial, out.display());
        }
        Command::Fea {
            input,
            out,
            element_kind,
        } => {
            let file = load_truss(&input)?;
            let kind = element_kind.unwrap_or(file.element_kind);
            let result = fea::solve(&file.truss, kind)?;
            write_displacements(std::fs::File::create(&out)?, &file.truss, &result)?;
            println!(
                "max displacement {:e} m, residual {:e}",
                result.max_displacement, result.residual
            );
        }
    }
    Ok(())
}

/// Writes `design,tag,joints,mae_cm,baseline_mae_cm`. The baseline is the
/// per-joint mean field of the evaluated designs sharing that topology.
fn evaluate(net: &trussgsm_core::gsm::GsmNetwork, samples: &[GraphSample], out: &Path) -> Result<()> {
    let errors = per_design_mae(&net.predict_many(samples)?, samples)?;
    let mut baseline_errors = vec![0.0; samples.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|g| samples[g[0]].node_count() == s.node_count() && samples[g[0]].edges() == s.edges())
        {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    for g in &groups {
        let members: Vec<GraphSample> = g.iter().map(|&i| samples[i].clone()).collect();
        let baseline = MeanBaseline::fit(&members)?;
        for (&i, s) in g.iter().zip(&members) {
            baseline_errors[i] = trussgsm_core::experiments::mae(&baseline.predict(s)?, s.targets())?;
        }
    }
    let mut csv = csv::Writer::from_path(out).map_err(Error::from)?;
    csv.write_record(["design", "tag", "joints", "mae_cm", "baseline_mae_cm"])?;
    for (i, s) in samples.iter().enumerate() {
        csv.write_record([
            i.to_string(),
            s.source_tag().to_string(),
            s.node_count().to_string(),
            errors[i].to_string(),
            baseline_errors[i].to_string(),
        ])?;
    }
    csv.flush()?;
    if !samples.is_empty() {
        let n = samples.len() as f64;
        println!(
            "MAE {:.3e} cm, baseline {:.3e} cm over {} designs",
            errors.iter().sum::<f64>() / n,
            baseline_errors.iter().sum::<f64>() / n,
            samples.len()
        );
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
