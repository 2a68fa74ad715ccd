//! Experiment harness: flat dotted key=value configs, run orchestration
//! for the profile/select/train/theory/bench subcommands, and manifest
//! bookkeeping for reproducible artifacts.

use crate::balance::BalanceStrategy;
use crate::model::{save_checkpoint, MixingMode, ModelConfig, PinnModel};
use crate::problems::{make_problem, Problem, REGISTRY};
use crate::regime::{profile, rank_heuristic, select, T_PROF_DEFAULT};
use crate::theorysim::{mc_uk, TailModel};
use crate::trainer::{train, TrainConfig, TrainError};
use crate::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "PINNLAB_OUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed line {0}: expected `key = value`, got {1:?}")]
    Malformed(usize, String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({expected})")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("invalid config: {0}")]
    Validation(String),
}

/// Internal (non-config) failures of a run command.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Problem(#[from] crate::problems::ProblemError),
    #[error("{0}")]
    Internal(String),
}

/// Monte Carlo settings of the theory subcommand.
#[derive(Clone, Debug)]
pub struct TheoryConfig {
    pub tail: String,
    pub alpha: Real,
    pub nu: Real,
    pub t0: Real,
    pub d: usize,
    pub k_list: Vec<usize>,
    pub trials: usize,
}

/// Sweep settings of the bench subcommand.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

/// Fully resolved run configuration shared by all subcommands.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub mixing: MixingMode,
    pub hidden_dim: usize,
    pub depth: usize,
    pub fourier_bands: usize,
    pub omega_max: Real,
    pub rank: usize,
    pub alpha_ad: Real,
    pub train: TrainConfig,
    pub profile_steps: usize,
    pub theory: TheoryConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "poisson1d".into(),
            seed: 0,
            out: None,
            mixing: MixingMode::Uam,
            hidden_dim: 32,
            depth: 3,
            fourier_bands: 4,
            omega_max: 10.0 * std::f64::consts::PI,
            rank: 4,
            alpha_ad: 1.0,
            train: TrainConfig::desk(2000, 0),
            profile_steps: T_PROF_DEFAULT,
            theory: TheoryConfig {
                tail: "pareto".into(),
                alpha: 2.0,
                nu: 1.0,
                t0: 1.0,
                d: 3,
                k_list: vec![2, 4, 8, 16, 32],
                trials: 10_000,
            },
            bench: BenchConfig {
                methods: vec!["vanilla".into(), "famo".into(), "famo_uam".into()],
                seeds: vec![0, 1, 2],
                workers: 1,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        expected,
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|v| parse_num(key, v, expected))
        .collect()
}

fn parse_strategy(key: &str, value: &str) -> Result<BalanceStrategy, ConfigError> {
    match value.trim() {
        "fixed" => Ok(BalanceStrategy::Fixed),
        "famo" => Ok(BalanceStrategy::Famo),
        "famo_log" => Ok(BalanceStrategy::FamoLog),
        "gradnorm" => Ok(BalanceStrategy::GradNorm),
        "uncertainty" => Ok(BalanceStrategy::Uncertainty),
        "pcgrad" => Ok(BalanceStrategy::PcGrad),
        "pcgrad_grouped" => Ok(BalanceStrategy::PcGradGrouped),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            expected: "fixed|famo|famo_log|gradnorm|uncertainty|pcgrad|pcgrad_grouped",
        }),
    }
}

fn strategy_name(s: BalanceStrategy) -> &'static str {
    match s {
        BalanceStrategy::Fixed => "fixed",
        BalanceStrategy::Famo => "famo",
        BalanceStrategy::FamoLog => "famo_log",
        BalanceStrategy::GradNorm => "gradnorm",
        BalanceStrategy::Uncertainty => "uncertainty",
        BalanceStrategy::PcGrad => "pcgrad",
        BalanceStrategy::PcGradGrouped => "pcgrad_grouped",
    }
}

/// 17 significant digits, enough for bit-exact f64 reload.
pub fn format_float(v: Real) -> String {
    format!("{v:.16e}")
}

impl RunConfig {
    /// Parse a key=value document, then apply override pairs (flags beat
    /// file values). Unknown keys are rejected.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Malformed(lineno + 1, raw.to_string()));
            };
            cfg.apply(k.trim(), v.trim())?;
        }
        for (k, v) in overrides {
            cfg.apply(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "problem" => self.problem = value.to_string(),
            "seed" => self.seed = parse_num(key, value, "u64")?,
            "out" => self.out = Some(PathBuf::from(value)),
            "mixing" => {
                self.mixing = match value {
                    "uam" => MixingMode::Uam,
                    "cam" => MixingMode::Cam,
                    "lcam" => MixingMode::Lcam,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            expected: "uam|cam|lcam",
                        })
                    }
                }
            }
            "model.hidden_dim" => self.hidden_dim = parse_num(key, value, "usize")?,
            "model.depth" => self.depth = parse_num(key, value, "usize")?,
            "model.fourier_bands" => self.fourier_bands = parse_num(key, value, "usize")?,
            "model.omega_max" => self.omega_max = parse_num(key, value, "f64")?,
            "model.rank" => self.rank = parse_num(key, value, "usize")?,
            "model.alpha_ad" => self.alpha_ad = parse_num(key, value, "f64")?,
            "train.epochs" => self.train.epochs = parse_num(key, value, "usize")?,
            "train.warmup" => self.train.warmup = parse_num(key, value, "usize")?,
            "train.lr" => self.train.lr = parse_num(key, value, "f64")?,
            "train.weight_decay" => self.train.weight_decay = parse_num(key, value, "f64")?,
            "train.clip_norm" => self.train.clip_norm = parse_num(key, value, "f64")?,
            "train.mixing_period" => self.train.mixing_period = parse_num(key, value, "usize")?,
            "train.ema_beta" => self.train.ema_beta = parse_num(key, value, "f64")?,
            "train.a0" => self.train.a0 = parse_num(key, value, "f64")?,
            "train.b" => self.train.b = parse_num(key, value, "f64")?,
            "train.delta_shallow" => self.train.delta_shallow = parse_num(key, value, "f64")?,
            "train.delta_deep" => self.train.delta_deep = parse_num(key, value, "f64")?,
            "train.lambda_ortho" => self.train.lambda_ortho = parse_num(key, value, "f64")?,
            "train.lambda_cross" => self.train.lambda_cross = parse_num(key, value, "f64")?,
            "train.rho_min" => self.train.rho_min = parse_num(key, value, "f64")?,
            "train.rho_max" => self.train.rho_max = parse_num(key, value, "f64")?,
            "train.strategy" => self.train.strategy = parse_strategy(key, value)?,
            "train.record_conflict" => self.train.record_conflict = parse_num(key, value, "bool")?,
            "counts.interior" => self.train.counts.interior = parse_num(key, value, "usize")?,
            "counts.boundary" => self.train.counts.boundary = parse_num(key, value, "usize")?,
            "counts.initial" => self.train.counts.initial = parse_num(key, value, "usize")?,
            "counts.data" => self.train.counts.data = parse_num(key, value, "usize")?,
            "profile.steps" => self.profile_steps = parse_num(key, value, "usize")?,
            "theory.tail" => self.tail_set(value)?,
            "theory.alpha" => self.theory.alpha = parse_num(key, value, "f64")?,
            "theory.nu" => self.theory.nu = parse_num(key, value, "f64")?,
            "theory.t0" => self.theory.t0 = parse_num(key, value, "f64")?,
            "theory.d" => self.theory.d = parse_num(key, value, "usize")?,
            "theory.k_list" => self.theory.k_list = parse_list(key, value, "usize list")?,
            "theory.trials" => self.theory.trials = parse_num(key, value, "usize")?,
            "bench.methods" => {
                self.bench.methods = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "bench.seeds" => self.bench.seeds = parse_list(key, value, "u64 list")?,
            "bench.workers" => self.bench.workers = parse_num(key, value, "usize")?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn tail_set(&mut self, value: &str) -> Result<(), ConfigError> {
        if value == "pareto" || value == "exponential" {
            self.theory.tail = value.to_string();
            Ok(())
        } else {
            Err(ConfigError::BadValue {
                key: "theory.tail".into(),
                value: value.into(),
                expected: "pareto|exponential",
            })
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !REGISTRY.contains(&self.problem.as_str()) {
            return Err(ConfigError::Validation(format!(
                "unknown problem {:?}; registered: {}",
                self.problem,
                REGISTRY.join(", ")
            )));
        }
        self.train
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        if self.profile_steps < 3 {
            return Err(ConfigError::Validation("profile.steps must be >= 3".into()));
        }
        if self.bench.workers == 0 {
            return Err(ConfigError::Validation("bench.workers must be >= 1".into()));
        }
        self.tail_model()
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn tail_model(&self) -> TailModel {
        if self.theory.tail == "exponential" {
            TailModel::Exponential {
                nu: self.theory.nu,
                t0: self.theory.t0,
            }
        } else {
            TailModel::Pareto {
                alpha: self.theory.alpha,
                t0: self.theory.t0,
            }
        }
    }

    /// Model config for the configured problem, with physical scalars
    /// initialized from the problem spec.
    pub fn model_config(&self, problem: &dyn Problem) -> ModelConfig {
        let mut mc = ModelConfig::desk(problem.input_dim(), problem.num_losses());
        mc.trunk.hidden_dim = self.hidden_dim;
        mc.trunk.depth = self.depth;
        mc.trunk.fourier_bands = self.fourier_bands;
        mc.trunk.omega_max = self.omega_max;
        mc.rank = self.rank;
        mc.alpha_ad = self.alpha_ad;
        if let Some(spec) = problem.physical() {
            mc.physical_init = vec![spec.init_log];
        }
        mc
    }

    /// Round-trippable key=value echo with all defaults resolved.
    pub fn to_kv_string(&self) -> String {
        let mixing = match self.mixing {
            MixingMode::Uam => "uam",
            MixingMode::Cam => "cam",
            MixingMode::Lcam => "lcam",
        };
        let mut kv: Vec<(String, String)> = vec![
            ("problem".into(), self.problem.clone()),
            ("seed".into(), self.seed.to_string()),
            ("mixing".into(), mixing.into()),
            ("model.hidden_dim".into(), self.hidden_dim.to_string()),
            ("model.depth".into(), self.depth.to_string()),
            ("model.fourier_bands".into(), self.fourier_bands.to_string()),
            ("model.omega_max".into(), format_float(self.omega_max)),
            ("model.rank".into(), self.rank.to_string()),
            ("model.alpha_ad".into(), format_float(self.alpha_ad)),
            ("train.epochs".into(), self.train.epochs.to_string()),
            ("train.warmup".into(), self.train.warmup.to_string()),
            ("train.lr".into(), format_float(self.train.lr)),
            ("train.weight_decay".into(), format_float(self.train.weight_decay)),
            ("train.clip_norm".into(), format_float(self.train.clip_norm)),
            ("train.mixing_period".into(), self.train.mixing_period.to_string()),
            ("train.ema_beta".into(), format_float(self.train.ema_beta)),
            ("train.a0".into(), format_float(self.train.a0)),
            ("train.b".into(), format_float(self.train.b)),
            ("train.delta_shallow".into(), format_float(self.train.delta_shallow)),
            ("train.delta_deep".into(), format_float(self.train.delta_deep)),
            ("train.lambda_ortho".into(), format_float(self.train.lambda_ortho)),
            ("train.lambda_cross".into(), format_float(self.train.lambda_cross)),
            ("train.rho_min".into(), format_float(self.train.rho_min)),
            ("train.rho_max".into(), format_float(self.train.rho_max)),
            ("train.strategy".into(), strategy_name(self.train.strategy).into()),
            ("train.record_conflict".into(), self.train.record_conflict.to_string()),
            ("counts.interior".into(), self.train.counts.interior.to_string()),
            ("counts.boundary".into(), self.train.counts.boundary.to_string()),
            ("counts.initial".into(), self.train.counts.initial.to_string()),
            ("counts.data".into(), self.train.counts.data.to_string()),
            ("profile.steps".into(), self.profile_steps.to_string()),
            ("theory.tail".into(), self.theory.tail.clone()),
            ("theory.alpha".into(), format_float(self.theory.alpha)),
            ("theory.nu".into(), format_float(self.theory.nu)),
            ("theory.t0".into(), format_float(self.theory.t0)),
            ("theory.d".into(), self.theory.d.to_string()),
            (
                "theory.k_list".into(),
                self.theory.k_list.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("theory.trials".into(), self.theory.trials.to_string()),
            ("bench.methods".into(), self.bench.methods.join(",")),
            (
                "bench.seeds".into(),
                self.bench.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("bench.workers".into(), self.bench.workers.to_string()),
        ];
        if let Some(out) = &self.out {
            kv.push(("out".into(), out.display().to_string()));
        }
        let mut s = String::new();
        for (k, v) in kv {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

// ---------------------------------------------------------------------
// Manifest

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub commit: String,
    pub config_sha256: String,
    /// file name -> sha256 of every emitted artifact
    pub files: BTreeMap<String, String>,
    pub failures: usize,
}

fn git_commit() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Hash every named file in `dir` and write manifest.json next to them.
pub fn write_manifest(dir: &Path, seed: u64, config_echo: &str, names: &[&str], failures: usize) -> Result<Manifest, CliError> {
    let mut files = BTreeMap::new();
    for name in names {
        let bytes = std::fs::read(dir.join(name))?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }
    let manifest = Manifest {
        seed,
        commit: git_commit(),
        config_sha256: sha256_hex(config_echo.as_bytes()),
        files,
        failures,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Re-hash every file listed in dir/manifest.json; returns mismatches.
pub fn check_manifest(dir: &Path) -> Result<Vec<String>, CliError> {
    let bytes = std::fs::read(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)?;
    let mut bad = Vec::new();
    for (name, want) in &manifest.files {
        match std::fs::read(dir.join(name)) {
            Ok(b) if &sha256_hex(&b) == want => {}
            Ok(_) => bad.push(format!("{name}: hash mismatch")),
            Err(e) => bad.push(format!("{name}: {e}")),
        }
    }
    Ok(bad)
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("json: {e}"))
    }
}

/// Default output directory: --out flag, config `out`, then
/// $PINNLAB_OUT_ROOT/<subcommand>, then ./runs/<subcommand>.
pub fn resolve_out(flag: Option<&Path>, cfg: &RunConfig, subcommand: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out {
        return p.clone();
    }
    let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".into());
    PathBuf::from(root).join(subcommand)
}

// ---------------------------------------------------------------------
// Subcommand bodies

pub fn run_profile(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let problem = make_problem(&cfg.problem)?;
    let mc = cfg.model_config(problem.as_ref());
    let prof = profile(problem.as_ref(), &mc, cfg.profile_steps, cfg.seed)?;

    let mut csv = Vec::new();
    prof.write_csv(&mut csv)?;
    std::fs::write(out.join("profile.csv"), &csv)?;
    std::fs::write(
        out.join("profile_summary.json"),
        serde_json::to_vec_pretty(&prof.summary_json())?,
    )?;
    let echo = cfg.to_kv_string();
    std::fs::write(out.join("config.txt"), &echo)?;
    write_manifest(
        out,
        cfg.seed,
        &echo,
        &["profile.csv", "profile_summary.json", "config.txt"],
        prof.failed as usize,
    )?;
    Ok(())
}

pub fn run_select(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let problem = make_problem(&cfg.problem)?;
    let mc = cfg.model_config(problem.as_ref());
    let prof = profile(problem.as_ref(), &mc, cfg.profile_steps, cfg.seed)?;
    let decision = select(&prof, problem.physical().is_some(), problem.num_losses());
    let rank = rank_heuristic(cfg.hidden_dim, prof.f_neg_hat, problem.num_losses());

    #[derive(Serialize)]
    struct DecisionOut<'a> {
        decision: &'a crate::regime::RegimeDecision,
        regime_row: &'a str,
        suggested_rank: usize,
    }
    let payload = DecisionOut {
        decision: &decision,
        regime_row: decision.regime_row(),
        suggested_rank: rank,
    };
    let json = serde_json::to_string_pretty(&payload)?;
    println!("{json}");
    std::fs::write(out.join("decision.json"), &json)?;
    let echo = cfg.to_kv_string();
    std::fs::write(out.join("config.txt"), &echo)?;
    write_manifest(out, cfg.seed, &echo, &["decision.json", "config.txt"], 0)?;
    Ok(())
}

/// Per-run summary record shared by train and bench outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub problem: String,
    pub seed: u64,
    pub final_rel_l2: Option<Real>,
    pub failed: bool,
    pub physical: Option<Real>,
    pub epochs_completed: usize,
}

pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let problem = make_problem(&cfg.problem)?;
    let mc = cfg.model_config(problem.as_ref());
    let mut model = PinnModel::new(mc, cfg.mixing, cfg.seed)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    let res = train(problem.as_ref(), &mut model, &tc)?;

    let mut log = Vec::new();
    res.write_log_csv(&mut log)?;
    std::fs::write(out.join("train_log.csv"), &log)?;
    let record = RunRecord {
        method: strategy_name(tc.strategy).to_string(),
        problem: cfg.problem.clone(),
        seed: cfg.seed,
        final_rel_l2: res.final_rel_l2,
        failed: res.failed,
        physical: res.physical,
        epochs_completed: res.loss_curves.len(),
    };
    std::fs::write(out.join("result.json"), serde_json::to_vec_pretty(&record)?)?;
    save_checkpoint(&model, &out.join("model.ckpt"))?;
    let echo = cfg.to_kv_string();
    std::fs::write(out.join("config.txt"), &echo)?;
    write_manifest(
        out,
        cfg.seed,
        &echo,
        &["train_log.csv", "result.json", "model.ckpt", "config.txt"],
        res.failed as usize,
    )?;
    Ok(())
}

pub fn run_theory(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let tail = cfg.tail_model();
    let mut csv = String::from("tail,d,k,e_uk,se,e_uk_factorized,se_factorized\n");
    for &k in &cfg.theory.k_list {
        let est = mc_uk(tail, cfg.theory.d, k, cfg.theory.trials, cfg.seed);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cfg.theory.tail,
            cfg.theory.d,
            k,
            format_float(est.joint.mean),
            format_float(est.joint.se),
            format_float(est.factorized.mean),
            format_float(est.factorized.se),
        ));
    }
    std::fs::write(out.join("theory.csv"), &csv)?;
    let echo = cfg.to_kv_string();
    std::fs::write(out.join("config.txt"), &echo)?;
    write_manifest(out, cfg.seed, &echo, &["theory.csv", "config.txt"], 0)?;
    Ok(())
}

/// Method name -> (strategy, use adapters, mixing mode).
fn method_setup(name: &str) -> Result<(BalanceStrategy, bool, MixingMode), CliError> {
    let setup = match name {
        "vanilla" => (BalanceStrategy::Fixed, false, MixingMode::Uam),
        "famo" => (BalanceStrategy::Famo, false, MixingMode::Uam),
        "famo_log" => (BalanceStrategy::FamoLog, false, MixingMode::Uam),
        "gradnorm" => (BalanceStrategy::GradNorm, false, MixingMode::Uam),
        "uncertainty" => (BalanceStrategy::Uncertainty, false, MixingMode::Uam),
        "pcgrad" => (BalanceStrategy::PcGrad, false, MixingMode::Uam),
        "pcgrad_grouped" => (BalanceStrategy::PcGradGrouped, false, MixingMode::Uam),
        "famo_uam" => (BalanceStrategy::Famo, true, MixingMode::Uam),
        "famo_cam" => (BalanceStrategy::Famo, true, MixingMode::Cam),
        "famo_lcam" => (BalanceStrategy::Famo, true, MixingMode::Lcam),
        "gradnorm_uam" => (BalanceStrategy::GradNorm, true, MixingMode::Uam),
        _ => {
            return Err(CliError::Config(ConfigError::Validation(format!(
                "unknown bench method {name:?}"
            ))))
        }
    };
    Ok(setup)
}

fn bench_one(cfg: &RunConfig, method: &str, seed: u64) -> Result<(RunRecord, String), CliError> {
    let (strategy, adapters, mixing) = method_setup(method)?;
    let problem = make_problem(&cfg.problem)?;
    let mut mc = cfg.model_config(problem.as_ref());
    if !adapters {
        mc.rank = 0;
        mc.alpha_ad = 0.0;
    }
    let mut model = PinnModel::new(mc, mixing, seed)?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    tc.strategy = strategy;
    let res = train(problem.as_ref(), &mut model, &tc)?;
    let mut log = Vec::new();
    res.write_log_csv(&mut log)?;
    let record = RunRecord {
        method: method.to_string(),
        problem: cfg.problem.clone(),
        seed,
        final_rel_l2: res.final_rel_l2,
        failed: res.failed,
        physical: res.physical,
        epochs_completed: res.loss_curves.len(),
    };
    Ok((record, String::from_utf8_lossy(&log).into_owned()))
}

/// Method x seed sweep over worker threads; partial failures are
/// recorded per run, never raised.
pub fn run_bench(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let jobs: Vec<(String, u64)> = cfg
        .bench
        .methods
        .iter()
        .flat_map(|m| cfg.bench.seeds.iter().map(move |&s| (m.clone(), s)))
        .collect();
    // validate method names before spawning anything
    for (m, _) in &jobs {
        method_setup(m)?;
    }

    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<(RunRecord, String), String>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let workers = cfg.bench.workers.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (method, seed) = &jobs[i];
                let outcome = bench_one(cfg, method, *seed).map_err(|e| e.to_string());
                *results[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut records = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut failures = 0usize;
    for (i, slot) in results.iter().enumerate() {
        let (method, seed) = &jobs[i];
        match slot.lock().unwrap().take().expect("job ran") {
            Ok((record, log)) => {
                let name = format!("{method}_{seed}.csv");
                std::fs::write(out.join(&name), log)?;
                if record.failed {
                    failures += 1;
                }
                names.push(name);
                records.push(record);
            }
            Err(msg) => {
                failures += 1;
                records.push(RunRecord {
                    method: method.clone(),
                    problem: cfg.problem.clone(),
                    seed: *seed,
                    final_rel_l2: None,
                    failed: true,
                    physical: None,
                    epochs_completed: 0,
                });
                eprintln!("run {method}/{seed} failed: {msg}");
            }
        }
    }
    records.sort_by(|a, b| (&a.method, a.seed).cmp(&(&b.method, b.seed)));
    std::fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&records)?)?;
    let echo = cfg.to_kv_string();
    std::fs::write(out.join("config.txt"), &echo)?;
    let mut name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    name_refs.push("summary.json");
    name_refs.push("config.txt");
    write_manifest(out, cfg.seed, &echo, &name_refs, failures)?;
    Ok(())
}
