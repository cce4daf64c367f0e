//! `totseg` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "totseg", version, about = "Unsupervised temporal action segmentation")]
struct Cli {
    /// More log output (repeat for debug level).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write a synthetic ordered-activity dataset.
    Synth(SynthArgs),
    /// Train one model per activity.
    Train(TrainArgs),
    /// Decode every video with a trained model.
    Segment(SegmentArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset root to write into.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub activity: String,
    /// Number of actions.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Mean frames per segment.
    #[arg(long, default_value_t = 60)]
    pub segment_len: usize,
    /// Relative segment length jitter in [0, 1).
    #[arg(long, default_value_t = 0.3)]
    pub jitter: f64,
    /// Distance between action means.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    /// Standard deviation of frame noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub permute_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop_prob: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    /// Activity to train (all activities when omitted).
    #[arg(long)]
    pub activity: Option<String>,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for checkpoints and training logs.
    #[arg(long)]
    pub out: PathBuf,
    /// ot, ot+tcl, tot or tot+tcl.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub videos_per_batch: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub sinkhorn_iters: Option<String>,
    #[arg(long)]
    pub marginal_tolerance: Option<String>,
    #[arg(long)]
    pub prior_scope: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub wd: Option<String>,
    /// Positive sampling window.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub renormalize_q: bool,
    #[arg(long)]
    pub freeze_iters: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub iterations: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    /// Use raw dot products instead of cosine scores.
    #[arg(long)]
    pub no_normalize: bool,
    /// Name of the background action.
    #[arg(long)]
    pub background: Option<String>,
    #[arg(long)]
    pub split_background: bool,
    #[arg(long)]
    pub parallel_activities: Option<String>,
}

impl TrainArgs {
    /// Flags given on the command line as config `(key, value)` pairs.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut put = |key: &str, value: &Option<String>| {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        };
        put("mode", &self.mode);
        put("rho", &self.rho);
        put("sigma", &self.sigma);
        put("epsilon", &self.epsilon);
        put("batch", &self.batch);
        put("videos_per_batch", &self.videos_per_batch);
        put("tau", &self.tau);
        put("sinkhorn_iters", &self.sinkhorn_iters);
        put("marginal_tolerance", &self.marginal_tolerance);
        put("prior_scope", &self.prior_scope);
        put("lr", &self.lr);
        put("wd", &self.wd);
        put("lambda", &self.lambda);
        put("alpha", &self.alpha);
        put("freeze_iters", &self.freeze_iters);
        put("epochs", &self.epochs);
        put("iterations", &self.iterations);
        put("seed", &self.seed);
        put("embed_dim", &self.embed_dim);
        put("hidden_dim", &self.hidden_dim);
        put("background", &self.background);
        put("parallel_activities", &self.parallel_activities);
        for (key, on, value) in [
            ("renormalize_q", self.renormalize_q, "true"),
            ("normalize", self.no_normalize, "false"),
            ("split_background", self.split_background, "true"),
        ] {
            if on {
                out.push((key.to_string(), value.to_string()));
            }
        }
        out
    }
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Checkpoint file, or the directory `train` wrote into.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub activity: Option<String>,
    /// Output root for labels and timelines.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Root written by `segment` (or any dataset root).
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset root with ground truth.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub activity: Option<String>,
    /// Name of the action whose frames are ignored.
    #[arg(long)]
    pub exclude_background: Option<String>,
    /// Detection rule for F1: gt (overlap over ground-truth length) or iou.
    #[arg(long, default_value = "gt")]
    pub overlap: String,
    /// Also write the report as `key=value` lines.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Segment(a) => commands::segment(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
