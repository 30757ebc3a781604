//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bridge::{generate, BridgeSchedule, SamplerConfig, StepSelection};
use crate::error::{Error, Result};
use crate::geometry::xyz::{read_structure, write_structure};
use crate::io::{
    export_results, read_jsonl, rebase_manifest, subset_manifest, write_jsonl, write_pair_dataset, DatasetManifest,
    ExportFormat,
};
use crate::metrics::{dmae, EvalEntry, EvalReport};
use crate::nn::DenoiserModel;
use crate::outlier::{
    detect, label_generations, train_classifier, ClassifierConfig, HeuristicSettings, LabeledGeneration, OutlierLabel,
    DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_DMAE_THRESHOLD, DEFAULT_NOISE_COEFFICIENTS,
};
use crate::par;
use crate::screening::{
    desk_surfaces, make_synthetic_dataset, save_candidates_csv, screen, AdsorbateTemplate, ScreenConfig, SlabSpec,
    SurrogateOracle, SyntheticSettings,
};
use crate::train::{
    clean_dataset, load_checkpoint, save_checkpoint, split_dataset, Checkpoint, RunConfig, Trainer, DEFAULT_MAX_DMAE,
    DEFAULT_MIN_DMAE,
};

#[derive(Debug, Parser)]
#[command(name = "bridgecat", version, about = "Relaxed adsorbate-slab structure generation")]
pub struct Cli {
    /// Worker threads for generation, evaluation and screening
    /// [default: BRIDGECAT_JOBS or 1].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, clean or split pair datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a denoiser.
    Train(TrainArgs),
    /// Generate relaxed structures from initial guesses.
    Generate(GenerateArgs),
    /// DMAE (and optionally surrogate energy) evaluation on a pair manifest.
    Eval(EvalArgs),
    /// Outlier labelling, classifier training and detection.
    #[command(subcommand)]
    Outlier(OutlierCommand),
    /// Rank surfaces by adsorption-energy offset from a reference.
    Screen(ScreenArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Synthetic pairs from the surrogate oracle.
    Make(MakeArgs),
    /// Keep pairs inside a DMAE window.
    Clean(CleanArgs),
    /// Random train/test split.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct MakeArgs {
    /// Output directory (structures, manifest.jsonl, surfaces.jsonl).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of generated surfaces.
    #[arg(long, default_value_t = 6)]
    pub surfaces: usize,
    /// Comma-separated adsorbates.
    #[arg(long, default_value = "O,OH")]
    pub adsorbates: String,
    #[arg(long)]
    pub max_sites: Option<usize>,
    /// In-plane placement jitter (Å).
    #[arg(long, default_value_t = 0.3)]
    pub jitter: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_DMAE)]
    pub min_dmae: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DMAE)]
    pub max_dmae: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_DMAE)]
    pub min_dmae: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DMAE)]
    pub max_dmae: f64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// key = value run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value = "linear")]
    pub sample_mode: StepSelection,
}

impl SamplerArgs {
    fn config(&self) -> SamplerConfig {
        SamplerConfig {
            sample_steps: self.steps,
            eta: self.eta,
            step_selection: self.sample_mode,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Single input structure.
    #[arg(long = "in", conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    /// Manifest of initial structures.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output file (with --in) or directory (with --manifest).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Report path; .csv or .json.
    #[arg(long)]
    pub out: PathBuf,
    /// Success threshold (eV) for surrogate-energy errors.
    #[arg(long)]
    pub energy_eps: Option<f64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Subcommand)]
pub enum OutlierCommand {
    /// Generate at several noise levels and label against the references.
    Label(LabelArgs),
    /// Train the confidence classifier on a label file.
    Train(ClassifierArgs),
    /// Triage one generated structure.
    Detect(DetectArgs),
}

#[derive(Debug, Args)]
pub struct HeuristicArgs {
    #[arg(long, default_value_t = 0.8)]
    pub collision_factor: f64,
    #[arg(long, default_value_t = 1.25)]
    pub bond_factor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub displacement_tol: f64,
}

impl HeuristicArgs {
    fn settings(&self) -> HeuristicSettings {
        HeuristicSettings {
            collision_factor: self.collision_factor,
            bond_factor: self.bond_factor,
            displacement_tol: self.displacement_tol,
        }
    }
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output directory (labels.jsonl and generated structures).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NOISE_COEFFICIENTS)]
    pub coefficients: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_DMAE_THRESHOLD)]
    pub dmae_threshold: f64,
    #[command(flatten)]
    pub heuristics: HeuristicArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    /// labels.jsonl written by `outlier label`.
    #[arg(long)]
    pub labels: PathBuf,
    /// Denoiser checkpoint; the classifier starts from its weights.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Initial guess the structure was generated from.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub heuristics: HeuristicArgs,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// JSON lines of slab specifications.
    #[arg(long, required_unless_present = "desk")]
    pub surfaces: Option<PathBuf>,
    /// Screen this many built-in desk surfaces instead.
    #[arg(long, conflicts_with = "surfaces")]
    pub desk: Option<usize>,
    /// O, OH or an adsorbate structure file (atom 0 binds).
    #[arg(long, default_value = "OH")]
    pub adsorbate: String,
    /// Reference surface id.
    #[arg(long)]
    pub reference: String,
    /// Offset window lo,hi in eV.
    #[arg(long, default_value = "-0.2,0.4", allow_hyphen_values = true)]
    pub window: String,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write each winning structure here.
    #[arg(long)]
    pub sites_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Label record on disk: the label plus the generated structure's path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    #[serde(flatten)]
    pub label: OutlierLabel,
    pub structure_path: PathBuf,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn log_resolved<T: Serialize>(command: &str, config: &T, seed: u64) {
    let json = serde_json::to_string(config).unwrap_or_default();
    log::info!("{command}: seed {seed}, config {json}");
}

fn load_model(path: &Path) -> Result<(DenoiserModel, BridgeSchedule, Checkpoint)> {
    let ckpt = load_checkpoint(path)?;
    let model = DenoiserModel::from_parts(ckpt.config.clone(), ckpt.params.clone())?;
    let schedule = BridgeSchedule::from_descriptor(&ckpt.schedule)?;
    Ok((model, schedule, ckpt))
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parse = |x: &str| -> Result<f64> {
        match x {
            "-inf" => Ok(f64::NEG_INFINITY),
            "inf" | "+inf" => Ok(f64::INFINITY),
            _ => x.parse().map_err(|_| usage(format!("bad window bound '{x}'"))),
        }
    };
    if parts.len() != 2 {
        return Err(usage(format!("window must be lo,hi, got '{s}'")));
    }
    Ok((parse(parts[0])?, parse(parts[1])?))
}

fn adsorbate_template(s: &str) -> Result<AdsorbateTemplate> {
    if let Some(t) = AdsorbateTemplate::named(s) {
        return Ok(t);
    }
    let p = Path::new(s);
    if p.exists() {
        return Ok(AdsorbateTemplate::from_structure(&read_structure(p)?));
    }
    Err(usage(format!(
        "unknown adsorbate '{s}' (use O, OH or a structure file)"
    )))
}

fn create_parent(p: &Path) -> Result<()> {
    if let Some(parent) = p.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn dataset(cmd: &DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Make(a) => {
            let oracle = SurrogateOracle::default();
            let ads = a
                .adsorbates
                .split(',')
                .map(|s| adsorbate_template(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            let surfaces = desk_surfaces(a.surfaces, a.seed)?;
            let settings = SyntheticSettings {
                lateral_jitter: a.jitter,
                max_sites: a.max_sites,
                min_dmae: a.min_dmae,
                max_dmae: a.max_dmae,
                ..SyntheticSettings::default()
            };
            log_resolved("dataset make", &(&settings, &oracle, &a.adsorbates, a.surfaces), a.seed);
            let pairs = make_synthetic_dataset(&surfaces, &ads, &oracle, a.seed, &settings)?;
            let path = write_pair_dataset(&a.out, &pairs, &["synthetic".into()])?;
            write_jsonl(a.out.join("surfaces.jsonl"), &surfaces)?;
            println!("{} pairs -> {}", pairs.len(), path.display());
        }
        DatasetCommand::Clean(a) => {
            log_resolved("dataset clean", &(a.min_dmae, a.max_dmae), 0);
            let m = DatasetManifest::load(&a.manifest)?;
            let pairs = m.load_pairs()?;
            let total = pairs.len();
            let kept: BTreeSet<String> = clean_dataset(pairs, a.min_dmae, a.max_dmae)?
                .iter()
                .map(|p| p.id().to_string())
                .collect();
            create_parent(&a.out)?;
            let out_dir = a.out.parent().map(Path::to_path_buf).unwrap_or_default();
            rebase_manifest(&subset_manifest(&m, &kept), &out_dir).save(&a.out)?;
            println!("kept {} of {total}", kept.len());
        }
        DatasetCommand::Split(a) => {
            log_resolved("dataset split", &a.ratio, a.seed);
            let m = DatasetManifest::load(&a.manifest)?;
            let ids: Vec<String> = m.records.iter().map(|r| r.id.clone()).collect();
            let (train, test) = split_dataset(&ids, a.ratio, a.seed)?;
            for (ids, out) in [(train, &a.train_out), (test, &a.test_out)] {
                create_parent(out)?;
                let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
                let set: BTreeSet<String> = ids.into_iter().collect();
                rebase_manifest(&subset_manifest(&m, &set), &dir).save(out)?;
            }
        }
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let pairs = DatasetManifest::load(&a.manifest)?.load_pairs()?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut t = Trainer::from_checkpoint(load_checkpoint(p)?)?;
            if let Some(e) = a.epochs {
                t.config.epochs = e;
            }
            t
        }
        None => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.train.seed = s;
                cfg.sampler.seed = s;
            }
            cfg.validate()?;
            let model = DenoiserModel::new(cfg.model.clone(), cfg.train.seed)?;
            Trainer::new(model, cfg.schedule()?, cfg.train.clone())?
        }
    };
    log_resolved(
        "train",
        &(&trainer.model.config, trainer.schedule.descriptor(), &trainer.config),
        trainer.config.seed,
    );
    trainer.fit(&pairs)?;
    create_parent(&a.out)?;
    save_checkpoint(&trainer.checkpoint(), &a.out)?;
    if let Some(last) = trainer.history.last() {
        println!("epoch {} loss {:.6}", last.epoch + 1, last.mean_loss);
    }
    Ok(())
}

fn generate_cmd(a: &GenerateArgs, jobs: usize) -> Result<()> {
    let (model, schedule, _) = load_model(&a.ckpt)?;
    let sampler = a.sampler.config();
    sampler.validate(&schedule)?;
    log_resolved("generate", &(&sampler, schedule.descriptor()), sampler.seed);
    match (&a.input, &a.manifest) {
        (Some(input), None) => {
            let s = read_structure(input)?;
            let g = generate(&s, &model, &schedule, &sampler)?;
            create_parent(&a.out)?;
            write_structure(&a.out, &g)?;
        }
        (None, Some(manifest)) => {
            let m = DatasetManifest::load(manifest)?;
            let items = m.load_initial()?;
            std::fs::create_dir_all(&a.out)?;
            let out = par::map(&items, jobs, |_, (_, s)| generate(s, &model, &schedule, &sampler))?;
            for g in &out {
                write_structure(a.out.join(format!("{}.generated.xyz", g.id)), g)?;
            }
        }
        _ => return Err(usage("generate needs exactly one of --in or --manifest")),
    }
    Ok(())
}

fn eval(a: &EvalArgs, jobs: usize) -> Result<()> {
    let (model, schedule, _) = load_model(&a.ckpt)?;
    let sampler = a.sampler.config();
    sampler.validate(&schedule)?;
    log_resolved("eval", &(&sampler, schedule.descriptor(), a.energy_eps), sampler.seed);
    let pairs = DatasetManifest::load(&a.manifest)?.load_pairs()?;
    let oracle = SurrogateOracle::default();
    let rows = par::map(&pairs, jobs, |_, p| {
        let g = generate(&p.initial, &model, &schedule, &sampler)?;
        let d = dmae(&g, &p.relaxed)?;
        let err = match a.energy_eps {
            Some(_) => Some(oracle.energy(&g)? - oracle.energy(&p.relaxed)?),
            None => None,
        };
        Ok((
            EvalEntry {
                id: p.id().to_string(),
                dmae: d,
                label: p.adsorbate_label.clone(),
            },
            err,
        ))
    })?;
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    let mut report = EvalReport::new(rows.into_iter().map(|r| r.0).collect());
    if let Some(eps) = a.energy_eps {
        report = report.with_energy_errors(&errors, eps)?;
    }
    create_parent(&a.out)?;
    export_results(&report, &a.out, ExportFormat::from_path(&a.out))?;
    println!("{}", serde_json::to_string(&report.summary())?);
    Ok(())
}

fn outlier(cmd: &OutlierCommand) -> Result<()> {
    match cmd {
        OutlierCommand::Label(a) => {
            let (model, schedule, _) = load_model(&a.ckpt)?;
            let sampler = a.sampler.config();
            let heur = a.heuristics.settings();
            log_resolved(
                "outlier label",
                &(&sampler, &heur, &a.coefficients, a.dmae_threshold),
                sampler.seed,
            );
            let pairs = DatasetManifest::load(&a.manifest)?.load_pairs()?;
            let labeled = label_generations(
                &model,
                &schedule,
                &pairs,
                &a.coefficients,
                a.dmae_threshold,
                &sampler,
                &heur,
            )?;
            let dir = a.out.join("structures");
            std::fs::create_dir_all(&dir)?;
            let mut records = Vec::with_capacity(labeled.len());
            for (k, l) in labeled.iter().enumerate() {
                let rel = PathBuf::from("structures").join(format!("{k:06}.xyz"));
                write_structure(a.out.join(&rel), &l.structure)?;
                records.push(LabelRecord {
                    label: l.label.clone(),
                    structure_path: rel,
                });
            }
            write_jsonl(a.out.join("labels.jsonl"), &records)?;
            let n = records.iter().filter(|r| r.label.is_outlier).count();
            println!("{} labels, {n} outliers", records.len());
        }
        OutlierCommand::Train(a) => {
            let records: Vec<LabelRecord> = read_jsonl(&a.labels)?;
            let base = a.labels.parent().map(Path::to_path_buf).unwrap_or_default();
            let data = records
                .iter()
                .map(|r| {
                    let mut s = read_structure(base.join(&r.structure_path))?;
                    s.id = r.label.id.clone();
                    Ok(LabeledGeneration {
                        structure: s,
                        label: r.label.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (template, schedule, _) = load_model(&a.ckpt)?;
            let cfg = ClassifierConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                learning_rate: a.lr,
                seed: a.seed,
                ..ClassifierConfig::default()
            };
            log_resolved("outlier train", &cfg, a.seed);
            let mut cls = template;
            let report = train_classifier(&mut cls, &data, &cfg)?;
            create_parent(&a.out)?;
            save_checkpoint(
                &Checkpoint::for_model(cls.config.clone(), schedule.descriptor(), cls.params),
                &a.out,
            )?;
            println!("{}", serde_json::to_string(&report)?);
        }
        OutlierCommand::Detect(a) => {
            let heur = a.heuristics.settings();
            log_resolved("outlier detect", &(&heur, a.threshold), 0);
            let (cls, _, _) = load_model(&a.classifier)?;
            let s = read_structure(&a.input)?;
            let r = read_structure(&a.reference)?;
            let d = detect(&s, &cls, a.threshold, &r, &heur)?;
            println!("{}", serde_json::to_string(&d)?);
        }
    }
    Ok(())
}

fn screen_cmd(a: &ScreenArgs, jobs: usize) -> Result<()> {
    let surfaces: Vec<SlabSpec> = match (&a.surfaces, a.desk) {
        (Some(p), _) => read_jsonl(p)?,
        (None, Some(n)) => desk_surfaces(n, a.seed)?,
        (None, None) => return Err(usage("screen needs --surfaces or --desk")),
    };
    let reference = surfaces
        .iter()
        .find(|s| s.id == a.reference)
        .cloned()
        .ok_or_else(|| usage(format!("reference '{}' is not among the surfaces", a.reference)))?;
    let (model, schedule, _) = load_model(&a.ckpt)?;
    let classifier = match &a.classifier {
        Some(p) => Some(load_model(p)?.0),
        None => None,
    };
    let config = ScreenConfig {
        adsorbate: adsorbate_template(&a.adsorbate)?,
        window: parse_window(&a.window)?,
        confidence_threshold: a.threshold,
        sampler: SamplerConfig {
            seed: a.seed,
            ..SamplerConfig::default()
        },
        jobs,
        ..ScreenConfig::default()
    };
    log_resolved("screen", &config, a.seed);
    let oracle = SurrogateOracle::default();
    let result = screen(
        &surfaces,
        &reference,
        &model,
        &schedule,
        classifier.as_ref(),
        &oracle,
        &config,
    )?;
    create_parent(&a.out)?;
    save_candidates_csv(&result.ranked, &a.out)?;
    if let Some(dir) = &a.sites_dir {
        std::fs::create_dir_all(dir)?;
        for c in &result.evaluated {
            if let Some(s) = &c.structure {
                write_structure(dir.join(format!("{}.xyz", c.surface_id)), s)?;
            }
        }
    }
    println!(
        "{} of {} surfaces inside the window",
        result.ranked.len(),
        result.evaluated.len()
    );
    Ok(())
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let jobs = cli.jobs.unwrap_or_else(par::default_jobs).max(1);
    let result = match &cli.command {
        Command::Version => {
            println!("bridgecat {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Dataset(c) => dataset(c),
        Command::Train(a) => train(a),
        Command::Generate(a) => generate_cmd(a, jobs),
        Command::Eval(a) => eval(a, jobs),
        Command::Outlier(c) => outlier(c),
        Command::Screen(a) => screen_cmd(a, jobs),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
