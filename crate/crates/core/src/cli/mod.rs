//! The `roundgen` command line: argument parsing, run configuration and
//! one function per subcommand.

mod config;

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{KpiConfig, PathsConfig, RunConfig, DATA_ROOT_ENV};

use crate::analysis::{
    kpi_distribution_compare, latent_traversal, rmse_report, traversal_file_name, write_pet_histogram_csv,
    write_pet_vs_ttc_csv, write_rmse_csv, write_traversal_csv,
};
use crate::cvae::{resume_training, train, ModelArtifact, ReconstructMode, TrainingSet};
use crate::error::{Error, Result};
use crate::extract::{extract_scenarios, Dataset, Scenario};
use crate::ingest::{generate_synthetic_recording_with, load_tracks, write_routes, write_tracks, LoadedTracks};
use crate::kpi::{evaluate_kpis, write_kpi_csv};
use crate::scenario_io::{read_scenario_dir, write_scenario_csv};

#[derive(Debug, Parser)]
#[command(name = "roundgen", version, about = "Roundabout two-vehicle scenario generation")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides both the run seed and the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic recordings with known routes into the data root.
    Synth(SynthArgs),
    /// Build the scenario dataset from the recordings in the data root.
    Extract,
    /// Train a model on the dataset.
    Train(TrainArgs),
    /// Sample scenarios for one condition category.
    Generate(GenerateArgs),
    /// Compute KPIs, PET histograms and (for paired sets) RMSE.
    Evaluate(EvaluateArgs),
    /// Sweep latent dimensions one at a time.
    Traverse(TraverseArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub recordings: u32,
    #[arg(long, default_value_t = 50)]
    pub vehicles: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Continue the artifact in the artifact directory for this many epochs.
    #[arg(long, value_name = "EPOCHS")]
    pub resume: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub condition: u32,
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    /// Defaults to `paths.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Scenario directory or `dataset:<split>`.
    #[arg(long)]
    pub set_a: String,
    /// Scenario directory or `dataset:<split>`. Not used with `--reconstruct`.
    #[arg(long, required_unless_present = "reconstruct")]
    pub set_b: Option<String>,
    /// Treat the sets as matched pairs and report RMSE.
    #[arg(long)]
    pub paired: bool,
    /// Use the model's reconstructions of set A as set B (implies paired).
    #[arg(long, conflicts_with = "set_b")]
    pub reconstruct: bool,
    /// Randomly keep at most this many scenarios per set.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Defaults to `paths.report_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraverseArgs {
    #[arg(long)]
    pub condition: u32,
    /// Latent dimensions to sweep; all of them when omitted.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    /// Defaults to `paths.report_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a.recordings, a.vehicles),
        Command::Extract => cmd_extract(&cfg).map(|_| ()),
        Command::Train(a) => cmd_train(&cfg, a.resume).map(|_| ()),
        Command::Generate(a) => {
            let out = a.out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
            cmd_generate(&cfg, a.condition, a.count, &out)
        }
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Traverse(a) => {
            let out = a.out.clone().unwrap_or_else(|| cfg.paths.report_dir.clone());
            cmd_traverse(&cfg, a.condition, &a.dims, &out)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn tracks_file_name(recording: u32) -> String {
    format!("{recording:02}_tracks.csv")
}

pub fn routes_file_name(recording: u32) -> String {
    format!("{recording:02}_routes.csv")
}

/// Each recording's seed depends only on the run seed and its index, so
/// recordings don't change with how many are requested.
pub fn cmd_synth(cfg: &RunConfig, recordings: u32, vehicles: usize) -> Result<()> {
    if recordings == 0 || vehicles == 0 {
        return Err(Error::InvalidConfig("need at least one recording and one vehicle".into()));
    }
    let geom = cfg.geometry()?;
    let root = &cfg.paths.data_root;
    create_dir(root)?;
    for r in 0..recordings {
        let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64);
        let rec = generate_synthetic_recording_with(&geom, vehicles, seed, &cfg.synth, r);
        write_tracks(&root.join(tracks_file_name(r)), &rec.tracks)?;
        write_routes(&root.join(routes_file_name(r)), &rec)?;
        log::info!("recording {r}: {} tracks", rec.tracks.len());
    }
    Ok(())
}

/// `*_tracks.csv` files in the data root, sorted by name.
pub fn recording_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_tracks.csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn extraction_report_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("report.json")
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<Dataset> {
    let geom = cfg.geometry()?;
    let files = recording_files(&cfg.paths.data_root)?;
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no *_tracks.csv recordings in {}",
            cfg.paths.data_root.display()
        )));
    }
    let recordings: Vec<LoadedTracks> = files
        .iter()
        .map(|f| load_tracks(f, None))
        .collect::<Result<_>>()?;
    let mut ids: Vec<u32> = recordings
        .iter()
        .flat_map(|r| r.tracks.iter().map(|t| t.recording_id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let (scenarios, report) = extract_scenarios(&recordings, &geom, &cfg.extraction)?;
    log::info!(
        "{} scenarios in {} categories from {} recordings",
        report.scenarios_final,
        report.categories_final,
        report.recordings
    );
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    let dataset = Dataset::build(scenarios, geom, cfg.extraction.clone(), ids, Some(report))?;
    if let Some(dir) = cfg.paths.dataset.parent() {
        create_dir(dir)?;
    }
    dataset.save(&cfg.paths.dataset)?;
    write_json(&extraction_report_path(&cfg.paths.dataset), &dataset.manifest.report)?;
    Ok(dataset)
}

/// Exclusive claim on an artifact directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".lock";

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        create_dir(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked { path }),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<usize>) -> Result<ModelArtifact> {
    let dataset = Dataset::load(&cfg.paths.dataset)?;
    let dir = &cfg.paths.artifact_dir;
    let _lock = DirLock::acquire(dir)?;
    let artifact = match resume {
        Some(epochs) => {
            let previous = ModelArtifact::load(dir)?;
            resume_training(previous, &TrainingSet::from_dataset(&dataset)?, epochs)?
        }
        None => train(&dataset, &cfg.model, &cfg.train)?,
    };
    artifact.save(dir)?;
    log::info!(
        "best epoch {} with validation loss {:.5}",
        artifact.best_epoch,
        artifact.best_val_loss
    );
    Ok(artifact)
}

fn load_artifact(cfg: &RunConfig) -> Result<ModelArtifact> {
    ModelArtifact::load(&cfg.paths.artifact_dir)
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    condition: u32,
    count: usize,
    seed: u64,
    dt: f64,
    files: &'a [String],
}

pub fn scenario_file_name(index: usize) -> String {
    format!("scenario_{index:04}.csv")
}

pub fn cmd_generate(cfg: &RunConfig, condition: u32, count: usize, out: &Path) -> Result<()> {
    let artifact = load_artifact(cfg)?;
    if !artifact.contains(condition) {
        return Err(Error::UnknownCategory(condition));
    }
    if count == 0 {
        return Err(Error::InvalidConfig("count must be positive".into()));
    }
    let scenarios = artifact.generate(condition, count, cfg.seed)?;
    create_dir(out)?;
    let files: Vec<String> = (0..scenarios.len()).map(scenario_file_name).collect();
    for (s, name) in scenarios.iter().zip(&files) {
        write_scenario_csv(&out.join(name), s)?;
    }
    write_json(
        &out.join("manifest.json"),
        &GenerateManifest {
            condition,
            count,
            seed: cfg.seed,
            dt: artifact.dt,
            files: &files,
        },
    )
}

/// Resolves a set argument: a scenario directory, or `dataset:<split>`
/// for one split of the configured dataset.
pub fn load_scenario_set(cfg: &RunConfig, set: &str) -> Result<Vec<(String, Scenario)>> {
    match set.strip_prefix("dataset:") {
        Some(split) => {
            let dataset = Dataset::load(&cfg.paths.dataset)?;
            let idx = dataset
                .split
                .part(split)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown split `{split}`")))?;
            Ok(idx
                .iter()
                .map(|&i| (format!("{split}_{i}"), dataset.scenarios[i].clone()))
                .collect())
        }
        None => {
            let dir = Path::new(set);
            if !dir.is_dir() {
                return Err(Error::InvalidConfig(format!("{set} is not a directory")));
            }
            read_scenario_dir(dir)
        }
    }
}

fn limit_set(set: &mut Vec<(String, Scenario)>, limit: Option<usize>, rng: &mut ChaCha8Rng) {
    if let Some(n) = limit {
        if set.len() > n {
            set.shuffle(rng);
            set.truncate(n);
        }
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let geom = cfg.geometry()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.report_dir.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = load_scenario_set(cfg, &args.set_a)?;
    let paired = args.paired || args.reconstruct;
    let b = if args.reconstruct {
        limit_set(&mut a, args.limit, &mut rng);
        let artifact = load_artifact(cfg)?;
        let originals: Vec<Scenario> = a.iter().map(|(_, s)| s.clone()).collect();
        let recon = artifact.reconstruct(&originals, ReconstructMode::Mean)?;
        a.iter()
            .zip(recon)
            .map(|((id, _), s)| (format!("{id}_recon"), s))
            .collect()
    } else {
        let set = args
            .set_b
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--set-b is required".into()))?;
        let mut b = load_scenario_set(cfg, set)?;
        if paired {
            if a.len() != b.len() {
                return Err(Error::ShapeMismatch(format!(
                    "paired evaluation needs equal set sizes, got {} and {}",
                    a.len(),
                    b.len()
                )));
            }
            if let Some(n) = args.limit {
                let mut idx: Vec<usize> = (0..a.len()).collect();
                idx.shuffle(&mut rng);
                idx.truncate(n);
                idx.sort_unstable();
                a = idx.iter().map(|&i| a[i].clone()).collect();
                b = idx.iter().map(|&i| b[i].clone()).collect();
            }
        } else {
            limit_set(&mut a, args.limit, &mut rng);
            limit_set(&mut b, args.limit, &mut rng);
        }
        b
    };
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoScenarios);
    }

    let params = cfg.kpi.params();
    let kpis = |set: &[(String, Scenario)]| -> Result<Vec<_>> {
        set.iter()
            .map(|(id, s)| Ok((id.clone(), s.condition.category_id, evaluate_kpis(s, &geom, &params)?)))
            .collect()
    };
    let kpi_a = kpis(&a)?;
    let kpi_b = kpis(&b)?;
    let values = |rows: &[(String, u32, crate::kpi::KpiResult)]| rows.iter().map(|r| r.2).collect::<Vec<_>>();
    let cmp = kpi_distribution_compare(&values(&kpi_a), &values(&kpi_b), cfg.kpi.pet_bin_width)?;
    let rmse = if paired {
        let sa: Vec<Scenario> = a.iter().map(|(_, s)| s.clone()).collect();
        let sb: Vec<Scenario> = b.iter().map(|(_, s)| s.clone()).collect();
        Some(rmse_report(&sa, &sb)?)
    } else {
        None
    };

    create_dir(&out)?;
    write_kpi_csv(&out.join("kpi_a.csv"), &kpi_a)?;
    write_kpi_csv(&out.join("kpi_b.csv"), &kpi_b)?;
    write_pet_histogram_csv(&out.join("pet_hist_a.csv"), &cmp.a)?;
    write_pet_histogram_csv(&out.join("pet_hist_b.csv"), &cmp.b)?;
    write_pet_vs_ttc_csv(&out.join("pet_vs_ttc.csv"), &cmp)?;
    if let Some(r) = &rmse {
        write_rmse_csv(&out.join("rmse.csv"), r)?;
        log::info!(
            "RMSE longitudinal {:.4} m, lateral {:.4} m",
            r.longitudinal_total,
            r.lateral_total
        );
    }
    Ok(())
}

pub fn cmd_traverse(cfg: &RunConfig, condition: u32, dims: &[usize], out: &Path) -> Result<()> {
    let artifact = load_artifact(cfg)?;
    let latent_dim = artifact.latent_dim();
    let dims: Vec<usize> = if dims.is_empty() {
        (0..latent_dim).collect()
    } else {
        dims.to_vec()
    };
    if let Some(&d) = dims.iter().find(|&&d| d >= latent_dim) {
        return Err(Error::DimensionOutOfRange {
            dimension: d,
            latent_dim,
        });
    }
    if !artifact.contains(condition) {
        return Err(Error::UnknownCategory(condition));
    }
    let geom = cfg.geometry()?;
    create_dir(out)?;
    for d in dims {
        let grid = latent_traversal(&artifact, &geom, condition, d)?;
        write_traversal_csv(&out.join(traversal_file_name(d)), &grid)?;
    }
    Ok(())
}
