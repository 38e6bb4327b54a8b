use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ate, wrap_angle, EvalError};
use crate::classifier::{class_names, BaselineModel, ClassDistribution, TrainConfig};
use crate::geom::{Pose, PoseCovariance};
use crate::maps::NUM_CLASSES;
use crate::mcl::{
    FilterConfig, FilterState, LocalizationMode, PriorMap, StepDiagnostics, StepInput,
};
use crate::measurement::{ContactKind, ContactMeasurement};
use crate::sim::{
    generate_course, probe_scenario, simulate_walk, synth_force_signal, write_walk_log, Course,
    CourseKind, CourseSpec, GaitParams, NoiseSpec, ProbeScript, SignalSpec, WalkLog,
};

pub const REPORT_HEADER: &str = "mode,seed,ate_m,improvement_pct";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourseSection {
    pub kind: CourseKind,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

fn default_resolution() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub train_per_class: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            train_per_class: 60,
            epochs: 300,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

/// Everything needed to reproduce one comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub course: CourseSection,
    #[serde(default = "default_modes")]
    pub modes: Vec<LocalizationMode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Overrides the course's nominal route.
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_prior_std")]
    pub prior_std: [f64; 6],
    /// World-frame offset of the filter prior from the true start.
    #[serde(default)]
    pub prior_offset: [f64; 3],
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub gait: GaitParams,
    #[serde(default)]
    pub signals: SignalSpec,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub probe: ProbeScript,
    #[serde(default)]
    pub classifier: ClassifierSection,
}

fn default_modes() -> Vec<LocalizationMode> {
    vec![LocalizationMode::OdomOnly, LocalizationMode::Geometric]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_prior_std() -> [f64; 6] {
    [0.05, 0.05, 0.02, 0.005, 0.005, 0.02]
}

impl ExperimentConfig {
    pub fn new(kind: CourseKind) -> Self {
        Self {
            course: CourseSection {
                kind,
                resolution: default_resolution(),
            },
            modes: default_modes(),
            seeds: default_seeds(),
            output: None,
            waypoints: None,
            prior_std: default_prior_std(),
            prior_offset: [0.0; 3],
            noise: NoiseSpec::default(),
            gait: GaitParams::default(),
            signals: SignalSpec::default(),
            filter: FilterConfig::default(),
            probe: ProbeScript::default(),
            classifier: ClassifierSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let cfg: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.modes.is_empty() || self.seeds.is_empty() {
            return Err(EvalError::Config(
                "modes and seeds must be non-empty".into(),
            ));
        }
        for m in &self.modes {
            let ch = m.channels();
            let ok = match self.course.kind {
                CourseKind::ChevronRamp => !ch.class && !matches!(m, LocalizationMode::Geometric3d),
                CourseKind::ClassTiles => !matches!(m, LocalizationMode::Geometric3d),
                CourseKind::WallRoom => !ch.class,
            };
            if !ok {
                return Err(EvalError::Config(format!(
                    "mode {m} is incompatible with the {} course's map layers",
                    self.course.kind.as_str()
                )));
            }
        }
        self.filter.validate()?;
        self.noise.validate()?;
        PoseCovariance::from_std_devs(self.prior_std)
            .map_err(|e| EvalError::Config(format!("prior_std: {e}")))?;
        if self.signals.min_len < crate::classifier::MIN_SIGNAL_LEN
            || self.signals.min_len > self.signals.max_len
        {
            return Err(EvalError::Config(
                "signal lengths must satisfy 4 <= min_len <= max_len".into(),
            ));
        }
        Ok(())
    }

    pub fn needs_classifier(&self) -> bool {
        self.modes.iter().any(|m| m.channels().class)
    }

    /// Filter prior mean for a run starting at `start`.
    pub fn prior_mean(&self, start: &Pose) -> Pose {
        let [dx, dy, dz] = self.prior_offset;
        Pose::new(
            start.position + nalgebra::Vector3::new(dx, dy, dz),
            start.orientation,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub mode: LocalizationMode,
    /// `None` for the across-seed mean rows.
    pub seed: Option<u64>,
    pub ate_m: f64,
    pub improvement_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub mode: LocalizationMode,
    pub seed: u64,
    pub k: usize,
    pub t: f64,
    pub err: [f64; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub errors: Vec<ErrorRow>,
    pub walk_hashes: Vec<(u64, String)>,
    /// Divergence resets per (seed, mode).
    pub divergences: Vec<(u64, LocalizationMode, usize)>,
}

impl EvalReport {
    pub fn mean_ate(&self, mode: LocalizationMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.seed.is_none())
            .map(|r| r.ate_m)
    }

    pub fn seed_ate(&self, mode: LocalizationMode, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.seed == Some(seed))
            .map(|r| r.ate_m)
    }

    /// Per-step errors of one run, in step order.
    pub fn series(&self, mode: LocalizationMode, seed: u64) -> Vec<&ErrorRow> {
        self.errors
            .iter()
            .filter(|e| e.mode == mode && e.seed == seed)
            .collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        write_report_csv(std::fs::File::create(dir.join("report.csv"))?, &self.rows)?;
        let mut errors = std::io::BufWriter::new(std::fs::File::create(dir.join("errors.csv"))?);
        write_error_csv(&mut errors, &self.errors)?;
        errors.flush()?;
        let mut meta = std::fs::File::create(dir.join("report.meta"))?;
        writeln!(meta, "seed,walk_sha256")?;
        for (seed, h) in &self.walk_hashes {
            writeln!(meta, "{seed},{h}")?;
        }
        Ok(())
    }
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        let seed = r.seed.map_or("mean".to_string(), |s| s.to_string());
        writeln!(w, "{},{},{},{}", r.mode, seed, r.ate_m, r.improvement_pct)?;
    }
    Ok(())
}

pub fn write_error_csv<W: Write>(mut w: W, rows: &[ErrorRow]) -> std::io::Result<()> {
    writeln!(w, "mode,seed,k,t,err_x,err_y,err_z,err_yaw")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.mode, r.seed, r.k, r.t, r.err[0], r.err[1], r.err[2], r.err[3]
        )?;
    }
    Ok(())
}

fn improvement(base: f64, value: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (base - value) / base
    }
}

/// Trains the summary-feature classifier on freshly synthesized signals.
pub fn train_signal_classifier(
    spec: &SignalSpec,
    section: &ClassifierSection,
) -> Result<BaselineModel, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(section.seed);
    let mut data = Vec::with_capacity(section.train_per_class * NUM_CLASSES as usize);
    for i in 0..section.train_per_class * NUM_CLASSES as usize {
        let c = (i % NUM_CLASSES as usize) as u8;
        data.push((synth_force_signal(c, spec, &mut rng), c));
    }
    let cfg = TrainConfig {
        epochs: section.epochs,
        learning_rate: section.learning_rate,
        seed: section.seed,
        ..Default::default()
    };
    Ok(BaselineModel::train(&data, class_names().len(), &cfg)?)
}

/// Classifies every touchdown signal in the log.
pub fn class_probabilities(log: &WalkLog, model: &BaselineModel) -> Vec<ClassDistribution> {
    log.signals.iter().map(|s| model.predict(s)).collect()
}

/// Filter inputs for records `1..`, attaching class estimates where available.
pub fn step_inputs(
    log: &WalkLog,
    classes: Option<&[ClassDistribution]>,
) -> Result<Vec<StepInput>, EvalError> {
    log.steps
        .iter()
        .skip(1)
        .map(|s| {
            let contacts = s
                .feet
                .iter()
                .map(|f| {
                    let c = ContactMeasurement::new(f.foot_offset(), f.kind);
                    match (f.kind, f.signal, classes) {
                        (ContactKind::Elevation, Some(i), Some(probs)) => {
                            let mut c = c
                                .with_class_probs(probs[i].probs().to_vec())
                                .map_err(crate::mcl::FilterError::from)?;
                            c.kind = ContactKind::ElevationClass;
                            Ok(c)
                        }
                        _ => Ok(c),
                    }
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(StepInput {
                odom_increment: s.odom_increment,
                odom_cov: s.odom_cov,
                contacts,
            })
        })
        .collect()
}

/// Output of running one mode over one walk.
pub struct LocalizationRun {
    pub trajectory: Vec<Pose>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub divergence_events: usize,
}

/// Runs `mode` over a walk log, returning one estimate per record.
#[allow(clippy::too_many_arguments)]
pub fn localize_log(
    log: &WalkLog,
    map: &PriorMap,
    mode: LocalizationMode,
    filter: &FilterConfig,
    prior_mean: Pose,
    prior_cov: &PoseCovariance,
    seed: u64,
    classes: Option<&[ClassDistribution]>,
) -> Result<LocalizationRun, EvalError> {
    if mode == LocalizationMode::OdomOnly {
        return Ok(LocalizationRun {
            trajectory: log.dead_reckoning(prior_mean),
            diagnostics: Vec::new(),
            divergence_events: 0,
        });
    }
    map.check_mode(mode)?;
    let mut state = FilterState::init(prior_mean, prior_cov, *filter, seed)?;
    for input in step_inputs(log, classes)? {
        state.step(&input, map, mode)?;
    }
    Ok(LocalizationRun {
        trajectory: state.trajectory().to_vec(),
        diagnostics: state.diagnostics().to_vec(),
        divergence_events: state.divergence_events(),
    })
}

fn walk_hash(log: &WalkLog) -> String {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_walk_log(&mut a, &mut b, log).expect("writing to memory");
    let mut h = Sha256::new();
    h.update(&a);
    h.update(&b);
    hex::encode(h.finalize())
}

struct SeedResult {
    seed: u64,
    hash: String,
    baseline: f64,
    runs: Vec<(LocalizationMode, f64, Vec<ErrorRow>, usize)>,
}

/// Course for one seed of the experiment.
pub fn build_course(cfg: &ExperimentConfig, seed: u64) -> Result<Course, EvalError> {
    Ok(generate_course(&CourseSpec {
        kind: cfg.course.kind,
        resolution: cfg.course.resolution,
        seed,
    })?)
}

/// The walk (or probe script on the wall room) that every mode of one seed shares.
pub fn simulate(cfg: &ExperimentConfig, course: &Course, seed: u64) -> Result<WalkLog, EvalError> {
    let walk_seed = seed.wrapping_add(1_000);
    Ok(match cfg.course.kind {
        CourseKind::WallRoom => {
            probe_scenario(course, &cfg.probe, &cfg.gait, &cfg.noise, walk_seed)?
        }
        _ => {
            let waypoints = match &cfg.waypoints {
                Some(w) => w
                    .iter()
                    .map(|p| nalgebra::Vector2::new(p[0], p[1]))
                    .collect(),
                None => course.waypoints.clone(),
            };
            simulate_walk(
                course,
                &waypoints,
                &cfg.gait,
                &cfg.noise,
                &cfg.signals,
                walk_seed,
            )?
        }
    })
}

fn run_seed(
    cfg: &ExperimentConfig,
    model: Option<&BaselineModel>,
    seed: u64,
) -> Result<SeedResult, EvalError> {
    let course = build_course(cfg, seed)?;
    let log = simulate(cfg, &course, seed)?;
    let map = course.prior_map();
    let probs = model.map(|m| class_probabilities(&log, m));
    let truth = log.truth();
    let prior = cfg.prior_mean(&truth[0]);
    let prior_cov = PoseCovariance::from_std_devs(cfg.prior_std).expect("validated");
    let baseline = ate(&truth, &log.dead_reckoning(prior))?;
    let mut runs = Vec::new();
    for &mode in &cfg.modes {
        let run = localize_log(
            &log,
            &map,
            mode,
            &cfg.filter,
            prior,
            &prior_cov,
            seed.wrapping_add(2_000),
            probs.as_deref(),
        )?;
        let err = ate(&truth, &run.trajectory)?;
        let series = truth
            .iter()
            .zip(&run.trajectory)
            .zip(&log.steps)
            .enumerate()
            .map(|(k, ((t, e), s))| {
                let d = e.position - t.position;
                ErrorRow {
                    mode,
                    seed,
                    k,
                    t: s.t,
                    err: [d.x, d.y, d.z, wrap_angle(e.yaw() - t.yaw())],
                }
            })
            .collect();
        runs.push((mode, err, series, run.divergence_events));
    }
    Ok(SeedResult {
        seed,
        hash: walk_hash(&log),
        baseline,
        runs,
    })
}

/// Runs every seed (in parallel) and every mode on each seed's shared walk log.
/// Files are written when `cfg.output` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let model = if cfg.needs_classifier() {
        Some(train_signal_classifier(&cfg.signals, &cfg.classifier)?)
    } else {
        None
    };
    let results: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            run_seed(cfg, model.as_ref(), seed).map_err(|e| EvalError::Seed {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut report = EvalReport {
        rows: Vec::new(),
        errors: Vec::new(),
        walk_hashes: Vec::new(),
        divergences: Vec::new(),
    };
    let n = results.len() as f64;
    let mean_base = results.iter().map(|r| r.baseline).sum::<f64>() / n;
    for r in results {
        report.walk_hashes.push((r.seed, r.hash));
        for (mode, err, series, div) in r.runs {
            report.rows.push(ReportRow {
                mode,
                seed: Some(r.seed),
                ate_m: err,
                improvement_pct: improvement(r.baseline, err),
            });
            report.errors.extend(series);
            report.divergences.push((r.seed, mode, div));
        }
    }
    for &mode in &cfg.modes {
        let mean = report
            .rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.ate_m)
            .sum::<f64>()
            / n;
        report.rows.push(ReportRow {
            mode,
            seed: None,
            ate_m: mean,
            improvement_pct: improvement(mean_base, mean),
        });
    }
    if let Some(dir) = &cfg.output {
        report.write_dir(dir)?;
    }
    Ok(report)
}
