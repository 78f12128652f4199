//! The `lgr` command line: thin argument parsing plus orchestration of the
//! library modules. Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{
    make_splits, read_trajectory, write_trajectory, CaseId, DatasetError, Split, SplitEntry,
    SplitManifest, TrajectoryFileHeader,
};
use crate::eval::{
    default_eps, evaluate_rollout, measure_inference_time, reference_window, rollout,
    write_field_slice_csv, write_metrics_csv, EvalError, RolloutConfig, RolloutInit, SinkhornParams,
};
use crate::features::{FeatureConfig, FeatureError};
use crate::gns::{
    load_checkpoint, norm_stats_for, save_checkpoint, train_model, AdamConfig, AdamState, GnsError,
    GnsModel, GnsSpec, TrainConfig, TrainItem,
};
use crate::sph::{run_simulation, ForceField, SimCase, SimConfig, SphError};
use crate::state::{kinetic_energy, Trajectory};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sph(#[from] SphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gns(#[from] GnsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Particle-based flow surrogates: simulate, build datasets, train and
/// evaluate learned simulators.
#[derive(Debug, Parser)]
#[command(name = "lgr", version, after_help = config_after_help())]
pub struct Cli {
    /// Optional `key = value` config file (defaults apply otherwise).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.steps=100`. Repeatable;
    /// wins over the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Print the machine-readable JSON summary instead of prose.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (default: all cores; env `LGR_THREADS` as fallback).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

fn config_after_help() -> String {
    format!("Config keys (defaults in parentheses resolve per case):\n{}", RunConfig::help())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    /// Decaying Taylor-Green vortex.
    Tgv,
    /// Reverse Poiseuille flow (opposed forcing halves).
    Rpf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseFilter {
    Tgv,
    Rpf,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one SPH simulation and write the trajectory file.
    Simulate {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Generate the full dataset: 12 TGV runs, 1 long RPF run, manifests.
    Dataset {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Restrict generation to one case.
        #[arg(long, value_enum, default_value = "all")]
        case: CaseFilter,
        /// Replace any existing output files.
        #[arg(long)]
        overwrite: bool,
    },
    /// Train a model on the manifest's train split; write a checkpoint.
    Train {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Continue from an existing checkpoint instead of initializing.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
        /// Override `train.steps` from the config.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Roll a checkpoint out autoregressively; write the predicted
    /// trajectory.
    Rollout {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Split manifest describing the dataset.
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Which entry of the split to start from.
        #[arg(long, default_value_t = 0)]
        entry: usize,
        /// Override `eval.steps` from the config.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Roll out and score a checkpoint; print the metric summary.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        entry: usize,
        #[arg(long)]
        steps: Option<usize>,
        /// Override `eval.sinkhorn_every` from the config.
        #[arg(long)]
        sinkhorn_every: Option<usize>,
        /// Override `eval.eps` from the config.
        #[arg(long)]
        eps: Option<f64>,
        /// Also write the per-step metrics CSV here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Export a per-particle field slice (positions, velocities, error)
    /// comparing one predicted frame against a reference frame.
    ExportCsv {
        #[arg(long, value_name = "FILE")]
        prediction: PathBuf,
        #[arg(long, value_name = "FILE")]
        reference: PathBuf,
        /// Frame index within the prediction file.
        #[arg(long)]
        frame: usize,
        /// Frame index within the reference file (defaults to `--frame`).
        #[arg(long)]
        reference_frame: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

/// Parses `std::env::args`, runs the command, returns the process exit
/// code. Usage errors exit with code 2 via clap before this returns.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    configure_threads(cli.threads);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn configure_threads(flag: Option<usize>) {
    let n = flag.or_else(|| std::env::var("LGR_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(n) = n.filter(|&n| n > 0) {
        // Fails harmlessly if a pool already exists (e.g. under tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one parsed command to completion.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    config.apply_sets(&cli.sets)?;
    config.log_resolved();

    match cli.command {
        Command::Simulate { case, seed, out } => cmd_simulate(&config, case, seed, &out, cli.json),
        Command::Dataset { out_dir, case, overwrite } => {
            cmd_dataset(&config, &out_dir, case, overwrite, cli.json)
        }
        Command::Train { manifest, out, resume, steps } => {
            cmd_train(&config, &manifest, &out, resume.as_deref(), steps, cli.json)
        }
        Command::Rollout { checkpoint, dataset, split, entry, steps, out } => {
            cmd_rollout(&config, &checkpoint, &dataset, split.into(), entry, steps, &out, cli.json)
        }
        Command::Eval { checkpoint, dataset, split, entry, steps, sinkhorn_every, eps, out } => {
            cmd_eval(
                &config,
                &checkpoint,
                &dataset,
                split.into(),
                entry,
                steps,
                sinkhorn_every,
                eps,
                out.as_deref(),
                cli.json,
            )
        }
        Command::ExportCsv { prediction, reference, frame, reference_frame, out } => {
            cmd_export_csv(&prediction, &reference, frame, reference_frame.unwrap_or(frame), &out)
        }
    }
}

/// The `SimConfig` a case resolves to under a run configuration.
pub fn sim_config(config: &RunConfig, case: CaseArg, seed: u64) -> Result<SimConfig, CliError> {
    let n = config.usize("sim.n_particles")?;
    let mut sc = match case {
        CaseArg::Tgv => SimConfig::taylor_green(n, seed),
        CaseArg::Rpf => SimConfig::reverse_poiseuille(n, seed),
    };
    sc.dt = config.f64("sim.dt")?;
    if let Some(v) = config.auto_usize("sim.n_steps")? {
        sc.n_steps = v;
    }
    if let Some(v) = config.auto_usize("sim.subsample_every")? {
        sc.subsample_every = v;
    }
    sc.rho0 = config.f64("sim.rho0")?;
    sc.c0 = config.f64("sim.c0")?;
    sc.nu = config.f64("sim.nu")?;
    sc.p_background = config.f64("sim.p_background")?;
    sc.h_factor = config.f64("sim.h_factor")?;
    sc.jitter = config.f64("sim.jitter")?;
    match &mut sc.case {
        SimCase::TaylorGreen { divergence_free, .. } => {
            *divergence_free = config.bool("sim.divergence_free")?;
        }
        SimCase::ReversePoiseuille { f0 } => *f0 = config.f64("sim.f0")?,
    }
    Ok(sc)
}

fn cmd_simulate(
    config: &RunConfig,
    case: CaseArg,
    seed: u64,
    out: &Path,
    json: bool,
) -> Result<(), CliError> {
    let sc = sim_config(config, case, seed)?;
    let t0 = Instant::now();
    let run = run_simulation(&sc)?;
    let wall = t0.elapsed().as_secs_f64();
    write_trajectory(&run.trajectory, run.case.into(), run.force.f0(), out)?;
    let traj = &run.trajectory;
    let e_kin = kinetic_energy(traj.frames.last().expect("non-empty run"), &traj.masses);
    if json {
        println!(
            "{}",
            serde_json::json!({
                "case": CaseId::from(run.case).as_str(),
                "n_particles": traj.n_particles(),
                "n_frames": traj.n_frames(),
                "e_kin_final": e_kin,
                "wall_s": wall,
                "out": out.display().to_string(),
            })
        );
    } else {
        println!(
            "{}: N={} frames={} E_kin={:.6e} wall={:.1}s -> {}",
            CaseId::from(run.case).as_str(),
            traj.n_particles(),
            traj.n_frames(),
            e_kin,
            wall,
            out.display()
        );
    }
    Ok(())
}

/// One planned dataset file: which case, which seed, which shape.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedFile {
    pub name: String,
    pub case: CaseArg,
    pub seed: u64,
    pub n_particles: usize,
    pub n_frames: usize,
}

/// Everything `dataset` will write, derived from config alone.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPlan {
    pub tgv: Vec<PlannedFile>,
    pub rpf: Vec<PlannedFile>,
}

pub const TGV_MANIFEST: &str = "tgv_splits.txt";
pub const RPF_MANIFEST: &str = "rpf_splits.txt";

/// The deterministic generation plan: 12 TGV trajectories on consecutive
/// seeds and one long RPF trajectory, shapes resolved from config.
pub fn dataset_plan(config: &RunConfig) -> Result<DatasetPlan, CliError> {
    let base = config.u64("dataset.base_seed")?;
    let stored_frames = |case: CaseArg| -> Result<usize, CliError> {
        let sc = sim_config(config, case, 0)?;
        Ok(sc.n_steps / sc.subsample_every)
    };
    let n = config.usize("sim.n_particles")?;
    let tgv_frames = stored_frames(CaseArg::Tgv)?;
    let rpf_frames = stored_frames(CaseArg::Rpf)?;
    let tgv = (0..12)
        .map(|i| PlannedFile {
            name: format!("tgv_{i:02}.lgrt"),
            case: CaseArg::Tgv,
            seed: base + i,
            n_particles: n,
            n_frames: tgv_frames,
        })
        .collect();
    let rpf = vec![PlannedFile {
        name: "rpf_00.lgrt".to_string(),
        case: CaseArg::Rpf,
        seed: base + 100,
        n_particles: n,
        n_frames: rpf_frames,
    }];
    Ok(DatasetPlan { tgv, rpf })
}

fn cmd_dataset(
    config: &RunConfig,
    out_dir: &Path,
    filter: CaseFilter,
    overwrite: bool,
    json: bool,
) -> Result<(), CliError> {
    let plan = dataset_plan(config)?;
    let mut files: Vec<&PlannedFile> = Vec::new();
    let mut outputs: Vec<String> = Vec::new();
    if filter != CaseFilter::Rpf {
        files.extend(&plan.tgv);
        outputs.push(TGV_MANIFEST.to_string());
    }
    if filter != CaseFilter::Tgv {
        files.extend(&plan.rpf);
        outputs.push(RPF_MANIFEST.to_string());
    }
    outputs.extend(files.iter().map(|f| f.name.clone()));

    let existing: Vec<String> =
        outputs.iter().filter(|name| out_dir.join(name).exists()).cloned().collect();
    if !existing.is_empty() && !overwrite {
        return Err(CliError::Invalid(format!(
            "output already present in {} ({}); pass --overwrite to replace it",
            out_dir.display(),
            existing.join(", ")
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    let t0 = Instant::now();
    let mut written: Vec<(CaseArg, String, usize)> = Vec::new();
    for planned in &files {
        let sc = sim_config(config, planned.case, planned.seed)?;
        log::info!(
            "simulating {} (seed {}, {} steps)",
            planned.name,
            planned.seed,
            sc.n_steps
        );
        let run = run_simulation(&sc)?;
        let path = out_dir.join(&planned.name);
        write_trajectory(&run.trajectory, run.case.into(), run.force.f0(), &path)?;
        written.push((planned.case, planned.name.clone(), run.trajectory.n_frames()));
    }

    for (case_arg, case_id, manifest_name) in [
        (CaseArg::Tgv, CaseId::TaylorGreen, TGV_MANIFEST),
        (CaseArg::Rpf, CaseId::ReversePoiseuille, RPF_MANIFEST),
    ] {
        let case_files: Vec<(String, usize)> = written
            .iter()
            .filter(|(c, _, _)| *c == case_arg)
            .map(|(_, name, frames)| (name.clone(), *frames))
            .collect();
        if case_files.is_empty() {
            continue;
        }
        let manifest = make_splits(case_id, &case_files)?;
        manifest.write(&out_dir.join(manifest_name))?;
    }

    let wall = t0.elapsed().as_secs_f64();
    if json {
        println!(
            "{}",
            serde_json::json!({
                "out_dir": out_dir.display().to_string(),
                "files": written.iter().map(|(_, n, f)| serde_json::json!({"name": n, "n_frames": f})).collect::<Vec<_>>(),
                "wall_s": wall,
            })
        );
    } else {
        println!("wrote {} trajectories to {} in {:.1}s", written.len(), out_dir.display(), wall);
    }
    Ok(())
}

/// The connectivity radius a trajectory file implies: `radius_factor`
/// times the mean particle spacing `(V/N)^{1/3}`.
pub fn feature_radius(config: &RunConfig, header: &TrajectoryFileHeader) -> Result<f64, CliError> {
    let volume: f64 = header.extents.iter().product();
    let dx = (volume / header.n_particles as f64).cbrt();
    Ok(config.f64("features.radius_factor")? * dx)
}

fn force_of(header: &TrajectoryFileHeader) -> ForceField {
    match header.case {
        CaseId::TaylorGreen => ForceField::None,
        CaseId::ReversePoiseuille => ForceField::ReversePoiseuille { f0: header.force_f0 },
    }
}

/// Loads the trajectories behind a split, each clipped to its manifest
/// frame range.
fn load_split_items(
    manifest: &SplitManifest,
    dir: &Path,
    split: Split,
) -> Result<Vec<TrainItem>, CliError> {
    let mut items = Vec::new();
    for entry in manifest.entries_for(split) {
        let (trajectory, header) = read_trajectory(&dir.join(&entry.file))?;
        let force = force_of(&header);
        items.push(TrainItem {
            frames: entry.start..entry.end.min(trajectory.n_frames()),
            trajectory,
            force,
        });
    }
    Ok(items)
}

fn cmd_train(
    config: &RunConfig,
    manifest_path: &Path,
    out: &Path,
    resume: Option<&Path>,
    steps_flag: Option<usize>,
    json: bool,
) -> Result<(), CliError> {
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = SplitManifest::read(manifest_path)?;
    let items = load_split_items(&manifest, &dir, Split::Train)?;
    if items.is_empty() {
        return Err(CliError::Invalid("manifest has no train entries".into()));
    }
    let val_items = load_split_items(&manifest, &dir, Split::Valid)?;

    let (mut model, mut adam) = match resume {
        Some(path) => load_checkpoint(path, None)?,
        None => {
            let first = manifest
                .entries_for(Split::Train)
                .next()
                .expect("nonempty train split");
            let header = crate::dataset::read_header(&dir.join(&first.file))?;
            let features = FeatureConfig {
                history: config.usize("features.history")?,
                noise_std: config.f64("features.noise_std")?,
                force_concat: config.bool("features.force_concat")?,
                ..FeatureConfig::new(feature_radius(config, &header)?)
            };
            let spec = GnsSpec {
                latent: config.usize("model.latent")?,
                blocks: config.usize("model.blocks")?,
                hidden_layers: config.usize("model.hidden")?,
            };
            let norm = norm_stats_for(&items)?;
            let model = GnsModel::new(spec, features, norm, config.u64("model.seed")?)?;
            let adam_config = AdamConfig {
                lr_init: config.f64("train.lr_init")?,
                lr_final: config.f64("train.lr_final")?,
                decay_steps: config.u64("train.decay_steps")?,
                ..AdamConfig::default()
            };
            let adam = AdamState::new(model.param_count(), adam_config);
            (model, adam)
        }
    };

    let train_config = TrainConfig {
        steps: steps_flag.map_or_else(|| config.usize("train.steps"), Ok)?,
        batch_size: config.usize("train.batch")?,
        seed: config.u64("train.seed")?,
        val_every: config.usize("train.val_every")?,
        val_samples: config.usize("train.val_samples")?,
        log_every: config.usize("train.log_every")?,
    };

    let t0 = Instant::now();
    let run = train_model(&mut model, &mut adam, &items, &val_items, &train_config)?;
    let wall = t0.elapsed().as_secs_f64();
    save_checkpoint(&model, &adam, out)?;

    let final_loss = run.losses.last().copied();
    let final_val = run.val.last().copied();
    if json {
        println!(
            "{}",
            serde_json::json!({
                "steps": run.losses.len(),
                "adam_step": adam.step(),
                "n_params": model.param_count(),
                "final_loss": final_loss,
                "final_val": final_val.map(|(s, v)| serde_json::json!({"step": s, "loss": v})),
                "wall_s": wall,
                "out": out.display().to_string(),
            })
        );
    } else {
        println!(
            "trained {} steps ({} params) in {:.1}s; final loss {} -> {}",
            run.losses.len(),
            model.param_count(),
            wall,
            final_loss.map_or("n/a".to_string(), |l| format!("{l:.6e}")),
            out.display()
        );
    }
    Ok(())
}

/// Resolves the rollout inputs shared by `rollout` and `eval`: model,
/// reference trajectory, initial window and rollout config.
struct RolloutSetup {
    model: GnsModel,
    trajectory: Trajectory,
    force: ForceField,
    entry: SplitEntry,
    init: RolloutInit,
    config: RolloutConfig,
}

fn prepare_rollout(
    config: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: Split,
    entry_idx: usize,
    steps_flag: Option<usize>,
) -> Result<RolloutSetup, CliError> {
    let (model, _adam) = load_checkpoint(checkpoint, None)?;
    let dir = dataset.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = SplitManifest::read(dataset)?;
    let entry = manifest
        .entries_for(split)
        .nth(entry_idx)
        .ok_or_else(|| {
            CliError::Invalid(format!("split {} has no entry #{entry_idx}", split.as_str()))
        })?
        .clone();
    let (trajectory, header) = read_trajectory(&dir.join(&entry.file))?;
    let force = force_of(&header);

    let steps = steps_flag.map_or_else(|| config.usize("eval.steps"), Ok)?;
    let fc = *model.feature_config();
    let init = RolloutInit::from_trajectory_at(&trajectory, fc.history, entry.start)?;
    let first_predicted = entry.start + fc.history + 1;
    if first_predicted + steps > trajectory.n_frames() {
        return Err(CliError::Invalid(format!(
            "{} steps from frame {} need reference frames up to {}, file has {}",
            steps,
            entry.start,
            first_predicted + steps,
            trajectory.n_frames()
        )));
    }
    if first_predicted + steps > entry.end {
        log::warn!(
            "rollout reads past the {} range [{}, {}): frames up to {} used as reference",
            split.as_str(),
            entry.start,
            entry.end,
            first_predicted + steps
        );
    }
    let rollout_config =
        RolloutConfig::new(steps, fc, *model.norm_stats(), trajectory.dt);
    Ok(RolloutSetup { model, trajectory, force, entry, init, config: rollout_config })
}

#[allow(clippy::too_many_arguments)]
fn cmd_rollout(
    config: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: Split,
    entry_idx: usize,
    steps_flag: Option<usize>,
    out: &Path,
    json: bool,
) -> Result<(), CliError> {
    let setup = prepare_rollout(config, checkpoint, dataset, split, entry_idx, steps_flag)?;
    let t0 = Instant::now();
    let predicted = rollout(
        &setup.model,
        &setup.trajectory.domain,
        &setup.force,
        &setup.init,
        &setup.config,
        &setup.trajectory.masses,
    )?;
    let wall = t0.elapsed().as_secs_f64();
    let header = crate::dataset::read_header(
        &dataset.parent().unwrap_or(Path::new(".")).join(&setup.entry.file),
    )?;
    write_trajectory(&predicted, header.case, header.force_f0, out)?;
    if json {
        println!(
            "{}",
            serde_json::json!({
                "n_frames": predicted.n_frames(),
                "n_particles": predicted.n_particles(),
                "start_frame": setup.init.start_frame,
                "wall_s": wall,
                "out": out.display().to_string(),
            })
        );
    } else {
        println!(
            "rolled out {} frames (N={}) from frame {} in {:.1}s -> {}",
            predicted.n_frames(),
            predicted.n_particles(),
            setup.init.start_frame,
            wall,
            out.display()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    config: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: Split,
    entry_idx: usize,
    steps_flag: Option<usize>,
    sinkhorn_every_flag: Option<usize>,
    eps_flag: Option<f64>,
    out: Option<&Path>,
    json: bool,
) -> Result<(), CliError> {
    let setup = prepare_rollout(config, checkpoint, dataset, split, entry_idx, steps_flag)?;
    let predicted = rollout(
        &setup.model,
        &setup.trajectory.domain,
        &setup.force,
        &setup.init,
        &setup.config,
        &setup.trajectory.masses,
    )?;
    let reference = reference_window(
        &setup.trajectory,
        setup.init.start_frame + 1,
        setup.config.n_steps,
    )?;

    let sinkhorn_every =
        sinkhorn_every_flag.map_or_else(|| config.usize("eval.sinkhorn_every"), Ok)?;
    let eps = match eps_flag.or(config.auto_f64("eval.eps")?) {
        Some(e) => e,
        None => default_eps(&reference.frames[0].positions, &reference.domain)?,
    };
    let mut report = evaluate_rollout(&predicted, &reference, sinkhorn_every, &SinkhornParams::new(eps))?;
    report.ms_per_step = Some(measure_inference_time(
        &setup.model,
        &setup.trajectory.domain,
        &setup.force,
        &setup.init,
        &setup.config,
        config.usize("eval.timing_repeats")?,
        3,
    )?);
    if let Some(path) = out {
        write_metrics_csv(path, &report)?;
    }

    let time_ms = report.ms_per_step.expect("just measured");
    if json {
        println!(
            "{}",
            serde_json::json!({
                "steps": report.n_steps(),
                "mse_p": report.mse_p_mean,
                "mse_e_kin": report.mse_e_kin,
                "sinkhorn": report.sinkhorn_mean,
                "sinkhorn_eps": eps,
                "sinkhorn_unconverged": report.sinkhorn_unconverged,
                "time_ms": time_ms,
                "n_params": setup.model.param_count(),
            })
        );
    } else {
        println!("rollout of {} steps on split {}:", report.n_steps(), split.as_str());
        println!("  MSE_p      {:.6e}", report.mse_p_mean);
        println!("  MSE_Ekin   {:.6e}", report.mse_e_kin);
        println!("  Sinkhorn   {:.6e} (eps {:.3e})", report.sinkhorn_mean, eps);
        println!("  Time [ms]  {:.3}", time_ms);
        println!("  # params   {}", setup.model.param_count());
        if report.sinkhorn_unconverged > 0 {
            println!(
                "  ({} of {} Sinkhorn evaluations hit the iteration cap)",
                report.sinkhorn_unconverged,
                report.sinkhorn.len()
            );
        }
    }
    Ok(())
}

fn cmd_export_csv(
    prediction: &Path,
    reference: &Path,
    frame: usize,
    reference_frame: usize,
    out: &Path,
) -> Result<(), CliError> {
    let (pred, _) = read_trajectory(prediction)?;
    let (reference_traj, _) = read_trajectory(reference)?;
    let pred_frame = pred
        .frames
        .get(frame)
        .ok_or_else(|| {
            CliError::Invalid(format!("frame {frame} outside the {}-frame prediction", pred.n_frames()))
        })?;
    let ref_frame = reference_traj.frames.get(reference_frame).ok_or_else(|| {
        CliError::Invalid(format!(
            "frame {reference_frame} outside the {}-frame reference",
            reference_traj.n_frames()
        ))
    })?;
    write_field_slice_csv(out, pred_frame, ref_frame, &pred.domain)?;
    println!("wrote {} rows -> {}", pred_frame.len(), out.display());
    Ok(())
}
