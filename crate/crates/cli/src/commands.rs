use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use totseg::dataio::{
    list_activities, read_label_names, read_labels, read_mapping, CatalogOptions, DatasetCatalog, GROUND_TRUTH_DIR,
    MAPPING_FILE,
};
use totseg::eval::{evaluate_activity, DatasetReport, EvalOptions, OverlapCriterion, VideoLabels};
use totseg::trainer::{segment_video, train_with, TrainedModel};
use totseg::{generate_synthetic, Checkpoint, Error, RunConfig, SyntheticSpec};

use crate::{EvalArgs, SegmentArgs, SynthArgs, TrainArgs};

pub const LABELS_DIR: &str = "labels";
pub const TIMELINE_DIR: &str = "timeline";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::InvalidConfig(_)) => 1,
            CliError::Core(e) if e.is_numerical() || matches!(e, Error::InfeasibleDecode { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn require_dir(path: &Path, what: &str) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} is not a directory", path.display())))
    }
}

fn activities(root: &Path, requested: &Option<String>) -> CliResult<Vec<String>> {
    let list = match requested {
        Some(a) => vec![a.clone()],
        None => list_activities(root)?,
    };
    if list.is_empty() {
        return Err(CliError::Usage(format!("no activities found under {}", root.display())));
    }
    Ok(list)
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| CliError::Core(Error::Io { path: path.to_path_buf(), source: e }))
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::Core(Error::Io { path: path.to_path_buf(), source: e }))
}

pub fn synth(args: &SynthArgs) -> CliResult {
    let spec = SyntheticSpec {
        num_videos: args.videos,
        num_actions: args.k,
        dim: args.dim,
        mean_segment_len: args.segment_len,
        len_jitter: args.jitter,
        cluster_separation: args.separation,
        noise_sigma: args.noise,
        permute_prob: args.permute_prob,
        drop_prob: args.drop_prob,
        seed: args.seed,
    };
    let mut catalog = generate_synthetic(&spec)?;
    catalog.activity = args.activity.clone();
    catalog.write_to(&args.out)?;
    println!(
        "wrote {} videos ({} frames, {} actions, dim {}) to {}",
        catalog.len(),
        catalog.total_frames(),
        catalog.num_actions,
        catalog.dim,
        args.out.join(&args.activity).display()
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> CliResult {
    require_dir(&args.data, "dataset root")?;
    // any problem with the configuration itself is a usage error
    let config =
        RunConfig::resolve(args.config.as_deref(), &args.overrides()).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("# configuration (flags > file > defaults)");
    print!("{}", config.describe());
    let names = activities(&args.data, &args.activity)?;
    create_dir(&args.out)?;

    let workers = config.parallel_activities.min(names.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<String>>>> = Mutex::new(names.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= names.len() {
                    break;
                }
                let outcome = train_activity(args, &config, &names[i]);
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    for outcome in results.into_inner().unwrap().into_iter().flatten() {
        println!("{}", outcome?);
    }
    Ok(())
}

fn train_activity(args: &TrainArgs, config: &RunConfig, activity: &str) -> CliResult<String> {
    let options = CatalogOptions { background: config.background.clone(), split_background: config.split_background };
    let catalog = DatasetCatalog::open(&args.data, activity, &options)?;
    info!("{activity}: {} videos, {} frames, {} clusters", catalog.len(), catalog.total_frames(), catalog.num_actions);
    let (model, log) = train_with(&catalog, &config.train, |r| {
        if r.iteration % 100 == 0 {
            info!("{activity}: {r}");
        }
    })?;
    let ckpt = args.out.join(format!("{activity}.totc"));
    let log_path = args.out.join(format!("{activity}.log"));
    model.checkpoint().save(&ckpt)?;
    log.save(&log_path)?;
    let last = log.records.last().map_or(f64::NAN, |r| r.total);
    Ok(format!("{activity}: {} iterations, final loss {last:.6}, checkpoint {}", log.records.len(), ckpt.display()))
}

fn checkpoint_path(model: &Path, activity: &str) -> PathBuf {
    if model.is_dir() {
        model.join(format!("{activity}.totc"))
    } else {
        model.to_path_buf()
    }
}

pub fn segment(args: &SegmentArgs) -> CliResult {
    require_dir(&args.data, "dataset root")?;
    if !args.model.exists() {
        return Err(CliError::Usage(format!("model {} does not exist", args.model.display())));
    }
    for activity in activities(&args.data, &args.activity)? {
        let model = TrainedModel::from_checkpoint(Checkpoint::load(&checkpoint_path(&args.model, &activity))?);
        let catalog = DatasetCatalog::open(&args.data, &activity, &CatalogOptions::default())?;
        if model.input_dim() != catalog.dim {
            return Err(Error::InvalidData(format!(
                "checkpoint expects {}-dimensional features but {activity} has {}",
                model.input_dim(),
                catalog.dim
            ))
            .into());
        }
        let labels_dir = args.out.join(&activity).join(LABELS_DIR);
        let timeline_dir = args.out.join(&activity).join(TIMELINE_DIR);
        create_dir(&labels_dir)?;
        create_dir(&timeline_dir)?;
        for i in 0..catalog.len() {
            let id = &catalog.videos[i].video_id;
            let result = segment_video(&model, &catalog, i)?;
            let mut labels = String::with_capacity(result.labels.len() * 3);
            for l in &result.labels {
                labels.push_str(&l.to_string());
                labels.push('\n');
            }
            write_file(&labels_dir.join(format!("{id}.txt")), &labels)?;
            let mut timeline = String::from("cluster,start,end\n");
            for s in &result.segments {
                timeline.push_str(&format!("{},{},{}\n", s.label, s.start, s.end));
            }
            write_file(&timeline_dir.join(format!("{id}.csv")), &timeline)?;
        }
        println!("{activity}: segmented {} videos into {}", catalog.len(), args.out.join(&activity).display());
    }
    Ok(())
}

/// Maps arbitrary label tokens to dense ids in order of first appearance.
#[derive(Default)]
struct Interner(HashMap<String, usize>);

impl Interner {
    fn ids(&mut self, tokens: Vec<String>) -> Vec<usize> {
        tokens
            .into_iter()
            .map(|t| {
                let next = self.0.len();
                *self.0.entry(t).or_insert(next)
            })
            .collect()
    }
}

fn prediction_file(pred_root: &Path, activity: &str, video: &str) -> Option<PathBuf> {
    let dir = pred_root.join(activity);
    [LABELS_DIR, GROUND_TRUTH_DIR].iter().map(|sub| dir.join(sub).join(format!("{video}.txt"))).find(|p| p.is_file())
}

pub fn eval(args: &EvalArgs) -> CliResult {
    require_dir(&args.gt, "ground-truth root")?;
    require_dir(&args.pred, "prediction root")?;
    let overlap: OverlapCriterion = args.overlap.parse()?;
    let mut report = DatasetReport { activities: Vec::new() };
    for activity in activities(&args.gt, &args.activity)? {
        let dir = args.gt.join(&activity);
        let mapping = read_mapping(&dir.join(MAPPING_FILE))?;
        let background = match &args.exclude_background {
            Some(name) => Some(mapping.id(name).ok_or_else(|| {
                CliError::Usage(format!("background action {name:?} is not in the {activity} mapping"))
            })?),
            None => None,
        };
        let gt_dir = dir.join(GROUND_TRUTH_DIR);
        let mut files: Vec<PathBuf> = fs::read_dir(&gt_dir)
            .map_err(|e| Error::Io { path: gt_dir.clone(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();

        let mut interner = Interner::default();
        let mut videos = Vec::with_capacity(files.len());
        for file in files {
            let video_id = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let ground_truth = read_labels(&file, &mapping)?;
            let pred_path = prediction_file(&args.pred, &activity, &video_id).ok_or_else(|| {
                Error::Evaluation(format!("no prediction for {activity}/{video_id} under {}", args.pred.display()))
            })?;
            let predicted = interner.ids(read_label_names(&pred_path)?);
            videos.push(VideoLabels { video_id, predicted, ground_truth });
        }
        let r = evaluate_activity(&videos, EvalOptions { background, overlap })?;
        report.activities.push((activity, r));
    }
    print!("{}", report.to_text());
    if let Some(path) = &args.report {
        write_file(path, &report.to_key_values())?;
    }
    Ok(())
}
