use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hapticloc::classifier::{read_signal_csv, Architecture, TerrainNet};
use hapticloc::eval::{
    ate, build_course, class_probabilities, load_prior_map, localize_log, run_experiment, simulate,
    train_signal_classifier, EvalError, ExperimentConfig,
};
use hapticloc::geom::{read_trajectory, write_trajectory, PoseCovariance, Trajectory};
use hapticloc::mcl::LocalizationMode;
use hapticloc::sim::{read_walk_log, write_walk_log, CourseKind, WalkLog};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "hapticloc",
    version,
    about = "Haptic localization for a simulated quadruped"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a terrain course and write its prior map files.
    MakeCourse {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a course, walk it, and write maps, walk log, signals and ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the particle filter over a recorded walk log.
    Localize {
        #[command(flatten)]
        common: Common,
        /// Directory holding elevation.hmap and optional classes.cmap / cloud.xyz.
        #[arg(long)]
        map: PathBuf,
        /// Walk log CSV; its signals are read from `signals.csv` next to it unless given.
        #[arg(long)]
        walk: PathBuf,
        #[arg(long)]
        signals: Option<PathBuf>,
    },
    /// Mean absolute translation error between two trajectory files.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
    },
    /// Class probabilities of one touchdown signal under a network weights file.
    Classify {
        #[arg(long, required_unless_present = "init_weights")]
        weights: Option<PathBuf>,
        #[arg(long, required_unless_present = "init_weights")]
        signal: Option<PathBuf>,
        /// Write randomly initialized weights to this path instead of classifying.
        #[arg(long, conflicts_with_all = ["weights", "signal"])]
        init_weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every configured mode on every seed and write the comparison report.
    RunExperiment {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Course used when no configuration file is given.
    #[arg(long, default_value = "chevron-ramp")]
    course: CourseKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Localization mode; a comma-separated list for run-experiment.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<LocalizationMode>,
    #[arg(long)]
    particles: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| CliError::from_eval(e, p))?,
            None => ExperimentConfig::new(self.course),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if !self.mode.is_empty() {
            cfg.modes = self.mode.clone();
        }
        if let Some(n) = self.particles {
            cfg.filter.particles = n;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn seed(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed
            .or_else(|| cfg.seeds.first().copied())
            .unwrap_or(0)
    }

    fn out(&self, cfg: &ExperimentConfig) -> PathBuf {
        cfg.output.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Failure reported as one `error: <kind>: <message>` line on stderr.
#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    fn from_eval(e: EvalError, path: &Path) -> Self {
        match e {
            EvalError::Io(io) => Self::io(path, io),
            other => other.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::Config(_) => "config",
            EvalError::LengthMismatch { .. } => "length-mismatch",
            EvalError::Io(_) => "io",
            EvalError::Map(_) => "map",
            EvalError::Sim(_) => "sim",
            EvalError::Filter(_) => "filter",
            EvalError::Classifier(_) => "classifier",
            EvalError::Seed { .. } => "seed",
        };
        Self::new(kind, e.to_string())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_traj(path: &Path, stamps: Vec<f64>, poses: Vec<hapticloc::Pose>) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_trajectory(&mut w, &Trajectory { stamps, poses })
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn read_traj(path: &Path) -> Result<Trajectory, CliError> {
    read_trajectory(open(path)?)
        .map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))
}

fn make_course(common: &Common) -> Result<(), CliError> {
    let cfg = common.config()?;
    let out = common.out(&cfg);
    let course = build_course(&cfg, common.seed(&cfg))?;
    course
        .save(&out)
        .map_err(|e| CliError::from(EvalError::from(e)))?;
    println!("{}", out.display());
    Ok(())
}

fn simulate_cmd(common: &Common) -> Result<(), CliError> {
    let cfg = common.config()?;
    let out = common.out(&cfg);
    let seed = common.seed(&cfg);
    let course = build_course(&cfg, seed)?;
    let log = simulate(&cfg, &course, seed)?;
    create_dir(&out)?;
    course
        .save(&out)
        .map_err(|e| CliError::from(EvalError::from(e)))?;
    let (walk_path, sig_path) = (out.join("walk.csv"), out.join("signals.csv"));
    let (mut w, mut s) = (create(&walk_path)?, create(&sig_path)?);
    write_walk_log(&mut w, &mut s, &log)
        .and_then(|_| w.flush())
        .and_then(|_| s.flush())
        .map_err(|e| CliError::io(&walk_path, e))?;
    write_traj(&out.join("truth.traj"), log.stamps(), log.truth())?;
    println!("{} steps -> {}", log.len(), out.display());
    Ok(())
}

fn read_log(walk: &Path, signals: Option<&Path>) -> Result<WalkLog, CliError> {
    let sig_path = match signals {
        Some(p) => p.to_path_buf(),
        None => walk.with_file_name("signals.csv"),
    };
    read_walk_log(open(walk)?, open(&sig_path)?)
        .map_err(|e| CliError::new("parse", format!("{}: {e}", walk.display())))
}

fn localize(
    common: &Common,
    map: &Path,
    walk: &Path,
    signals: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = common.config()?;
    let mode = match common.mode.as_slice() {
        [] => LocalizationMode::Geometric,
        [m] => *m,
        _ => return Err(CliError::new("usage", "localize takes a single --mode")),
    };
    let log = read_log(walk, signals)?;
    if log.is_empty() {
        return Err(CliError::new(
            "parse",
            format!("{}: walk log is empty", walk.display()),
        ));
    }
    let prior_map = load_prior_map(map)?;
    let classes = if mode.channels().class {
        let model = train_signal_classifier(&cfg.signals, &cfg.classifier)?;
        Some(class_probabilities(&log, &model))
    } else {
        None
    };
    let prior = cfg.prior_mean(&log.steps[0].truth);
    let cov = PoseCovariance::from_std_devs(cfg.prior_std)
        .map_err(|e| CliError::new("config", e.to_string()))?;
    let seed = common.seed(&cfg).wrapping_add(2_000);
    let run = localize_log(
        &log,
        &prior_map,
        mode,
        &cfg.filter,
        prior,
        &cov,
        seed,
        classes.as_deref(),
    )?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("est.traj"));
    write_traj(&out, log.stamps(), run.trajectory)?;
    println!("{} {} poses -> {}", mode.as_str(), log.len(), out.display());
    Ok(())
}

fn eval(truth: &Path, est: &Path) -> Result<(), CliError> {
    let (t, e) = (read_traj(truth)?, read_traj(est)?);
    println!("{:.6}", ate(&t.poses, &e.poses)?);
    Ok(())
}

fn classify(
    weights: Option<&Path>,
    signal: Option<&Path>,
    init: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let classifier_err =
        |e: hapticloc::classifier::ClassifierError| CliError::from(EvalError::from(e));
    if let Some(path) = init {
        let net = TerrainNet::random(
            Architecture::default(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        let mut w = create(path)?;
        net.write(&mut w).map_err(classifier_err)?;
        w.flush().map_err(|e| CliError::io(path, e))?;
        println!("{}", path.display());
        return Ok(());
    }
    let (weights, signal) = (
        weights.expect("clap enforces"),
        signal.expect("clap enforces"),
    );
    let net = TerrainNet::read(open(weights)?).map_err(classifier_err)?;
    let s = read_signal_csv(open(signal)?).map_err(classifier_err)?;
    let probs = net.forward(&s).map_err(classifier_err)?;
    let line: Vec<String> = probs.probs().iter().map(|p| format!("{p:.9}")).collect();
    println!("{}", line.join(","));
    Ok(())
}

fn run_experiment_cmd(common: &Common) -> Result<(), CliError> {
    let mut cfg = common.config()?;
    if cfg.output.is_none() {
        cfg.output = Some(PathBuf::from("."));
    }
    let report = run_experiment(&cfg)?;
    for &mode in &cfg.modes {
        if let Some(m) = report.mean_ate(mode) {
            println!("{} {m:.6}", mode.as_str());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MakeCourse { common } => make_course(common),
        Command::Simulate { common } => simulate_cmd(common),
        Command::Localize {
            common,
            map,
            walk,
            signals,
        } => localize(common, map, walk, signals.as_deref()),
        Command::Eval { truth, est } => eval(truth, est),
        Command::Classify {
            weights,
            signal,
            init_weights,
            seed,
        } => classify(
            weights.as_deref(),
            signal.as_deref(),
            init_weights.as_deref(),
            *seed,
        ),
        Command::RunExperiment { common } => run_experiment_cmd(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind, e.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
