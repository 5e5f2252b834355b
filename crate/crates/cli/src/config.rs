//! `key = value` experiment configuration.
//!
//! One pair per line, `#` starts a comment. Every key must be known; a
//! typo such as `lamda` is reported by name instead of being ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rgi_core::corruption::{CorruptionSpec, Fill, Mechanism};
use rgi_core::solver::{InitZ, Loss, MaskStrategy, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorChoice {
    Affine,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptionKind {
    None,
    CentralBlock,
    RandomMissing,
    Irregular,
    DefectFill,
    MaskFile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillKind {
    Normal,
    Uniform,
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,

    pub generator: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub generator_kind: GeneratorChoice,
    pub latent_dim: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,

    pub corruption: CorruptionKind,
    pub block_size: usize,
    pub fraction: f64,
    pub fill: FillKind,
    /// Mean corruption level `e` of the normal fill.
    pub level: f64,
    pub mask_file: Option<PathBuf>,

    pub lambda: f64,
    pub loss: Loss,
    pub iterations: usize,
    pub lr_z: f64,
    pub lr_mask: f64,
    pub lr_theta: f64,
    pub finetune_start: usize,
    pub mask_strategy: MaskStrategy,
    pub latent_bound: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init_z: InitZ,
    pub threshold: f64,

    pub lambdas: Vec<f64>,
    pub mask_lambdas: Vec<f64>,
    pub restarts: usize,
    pub harness_lr_z: f64,
    pub lattice_radius: f64,
    pub lattice_points: usize,
    pub final_tolerance: f64,
    pub monotone_slack: f64,

    pub samples: usize,
    pub levels: Vec<f64>,

    pub train_pairs: usize,
    pub epochs: usize,
    pub train_lr: f64,
    pub batch_size: Option<usize>,
    pub decoder_hidden: Vec<usize>,

    pub metrics: Vec<String>,
    pub restored: Option<PathBuf>,
    pub clean: Option<PathBuf>,
    pub pred_mask: Option<PathBuf>,
    pub true_mask: Option<PathBuf>,
    pub scores: Option<PathBuf>,
}

pub const KNOWN_METRICS: &[&str] = &["rmse", "psnr", "ssim", "dice", "auroc"];

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            seed: 0,
            out: None,
            generator: None,
            fixture: None,
            generator_kind: GeneratorChoice::Mlp,
            latent_dim: 8,
            image_height: 16,
            image_width: 16,
            channels: 1,
            hidden: vec![32, 64],
            leaky_slope: rgi_core::generator::DEFAULT_LEAKY_SLOPE,
            corruption: CorruptionKind::CentralBlock,
            block_size: 8,
            fraction: 0.25,
            fill: FillKind::Normal,
            level: 1.0,
            mask_file: None,
            lambda: s.lambda,
            loss: s.loss,
            iterations: s.iterations,
            lr_z: s.lr_z,
            lr_mask: s.lr_mask,
            lr_theta: s.lr_theta,
            finetune_start: s.finetune_start,
            mask_strategy: s.mask_strategy,
            latent_bound: s.latent_bound,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
            init_z: s.init_z,
            threshold: s.threshold,
            lambdas: vec![0.8, 0.4, 0.2, 0.1, 0.05],
            mask_lambdas: vec![
                0.8, 0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 0.0005, 0.0002, 0.0001,
            ],
            restarts: 5,
            harness_lr_z: 0.05,
            lattice_radius: 3.0,
            lattice_points: 601,
            final_tolerance: 1e-2,
            monotone_slack: 1e-6,
            samples: 20,
            levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            train_pairs: 200,
            epochs: 1000,
            train_lr: 1e-2,
            batch_size: None,
            decoder_hidden: vec![2],
            metrics: ["rmse", "psnr", "ssim", "dice"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            restored: None,
            clean: None,
            pred_mask: None,
            true_mask: None,
            scores: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| anyhow!("invalid value {v:?} for `{key}`: {e}"))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn optional<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn choice<T: Copy>(key: &str, v: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            anyhow!(
                "invalid value {v:?} for `{key}` (expected one of {})",
                names.join(", ")
            )
        })
}

fn name_of<T: PartialEq>(value: T, options: &[(&'static str, T)]) -> &'static str {
    options
        .iter()
        .find(|(_, t)| *t == value)
        .map(|(n, _)| *n)
        .expect("value has a name")
}

const GENERATORS: &[(&str, GeneratorChoice)] = &[
    ("affine", GeneratorChoice::Affine),
    ("mlp", GeneratorChoice::Mlp),
];
const CORRUPTIONS: &[(&str, CorruptionKind)] = &[
    ("none", CorruptionKind::None),
    ("central_block", CorruptionKind::CentralBlock),
    ("random_missing", CorruptionKind::RandomMissing),
    ("irregular", CorruptionKind::Irregular),
    ("defect_fill", CorruptionKind::DefectFill),
    ("mask_file", CorruptionKind::MaskFile),
];
const FILLS: &[(&str, FillKind)] = &[
    ("normal", FillKind::Normal),
    ("uniform", FillKind::Uniform),
    ("mean", FillKind::Mean),
];
const LOSSES: &[(&str, Loss)] = &[("l2", Loss::L2), ("l1", Loss::L1)];
const STRATEGIES: &[(&str, MaskStrategy)] = &[
    ("closed_form", MaskStrategy::ClosedForm),
    ("gradient", MaskStrategy::Gradient),
];
const INITS: &[(&str, InitZ)] = &[
    ("zero", InitZ::Zero),
    ("seeded_normal", InitZ::SeededNormal),
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("line {}: expected key = value, got {line:?}", lineno + 1)
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                bail!("line {}: duplicate config key `{key}`", lineno + 1);
            }
            cfg.set(key, value)
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let path = || Some(PathBuf::from(v));
        match key {
            "seed" => self.seed = num(key, v)?,
            "out" => self.out = path(),
            "generator" => self.generator = path(),
            "fixture" => self.fixture = path(),
            "generator_kind" => self.generator_kind = choice(key, v, GENERATORS)?,
            "latent_dim" => self.latent_dim = num(key, v)?,
            "image_height" => self.image_height = num(key, v)?,
            "image_width" => self.image_width = num(key, v)?,
            "channels" => self.channels = num(key, v)?,
            "hidden" => self.hidden = list(key, v)?,
            "leaky_slope" => self.leaky_slope = num(key, v)?,
            "corruption" => self.corruption = choice(key, v, CORRUPTIONS)?,
            "block_size" => self.block_size = num(key, v)?,
            "fraction" => self.fraction = num(key, v)?,
            "fill" => self.fill = choice(key, v, FILLS)?,
            "level" => self.level = num(key, v)?,
            "mask_file" => self.mask_file = path(),
            "lambda" => self.lambda = num(key, v)?,
            "loss" => self.loss = choice(key, v, LOSSES)?,
            "iterations" => self.iterations = num(key, v)?,
            "lr_z" => self.lr_z = num(key, v)?,
            "lr_mask" => self.lr_mask = num(key, v)?,
            "lr_theta" => self.lr_theta = num(key, v)?,
            "finetune_start" => self.finetune_start = num(key, v)?,
            "mask_strategy" => self.mask_strategy = choice(key, v, STRATEGIES)?,
            "latent_bound" => self.latent_bound = optional(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "init_z" => self.init_z = choice(key, v, INITS)?,
            "threshold" => self.threshold = num(key, v)?,
            "lambdas" => self.lambdas = list(key, v)?,
            "mask_lambdas" => self.mask_lambdas = list(key, v)?,
            "restarts" => self.restarts = num(key, v)?,
            "harness_lr_z" => self.harness_lr_z = num(key, v)?,
            "lattice_radius" => self.lattice_radius = num(key, v)?,
            "lattice_points" => self.lattice_points = num(key, v)?,
            "final_tolerance" => self.final_tolerance = num(key, v)?,
            "monotone_slack" => self.monotone_slack = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "levels" => self.levels = list(key, v)?,
            "train_pairs" => self.train_pairs = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "train_lr" => self.train_lr = num(key, v)?,
            "batch_size" => self.batch_size = optional(key, v)?,
            "decoder_hidden" => self.decoder_hidden = list(key, v)?,
            "metrics" => {
                self.metrics = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "restored" => self.restored = path(),
            "clean" => self.clean = path(),
            "pred_mask" => self.pred_mask = path(),
            "true_mask" => self.true_mask = path(),
            "scores" => self.scores = path(),
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if let Some(m) = self
            .metrics
            .iter()
            .find(|m| !KNOWN_METRICS.contains(&m.as_str()))
        {
            bail!("unknown metric `{m}` (known: {})", KNOWN_METRICS.join(", "));
        }
        if self.corruption == CorruptionKind::MaskFile && self.mask_file.is_none() {
            bail!("corruption = mask_file needs `mask_file`");
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            loss: self.loss,
            iterations: self.iterations,
            lr_z: self.lr_z,
            lr_mask: self.lr_mask,
            lr_theta: self.lr_theta,
            finetune_start: self.finetune_start,
            mask_strategy: self.mask_strategy,
            latent_bound: self.latent_bound,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            seed: self.seed,
            init_z: self.init_z,
            threshold: self.threshold,
        }
    }

    pub fn image_shape(&self) -> Vec<usize> {
        if self.channels == 1 {
            vec![self.image_height, self.image_width]
        } else {
            vec![self.image_height, self.image_width, self.channels]
        }
    }

    /// Corruption spec for a procedural mechanism; `None` for `none` and
    /// `mask_file`, which need no random draw.
    pub fn corruption_spec(&self, level: f64, seed: u64) -> Option<CorruptionSpec> {
        let fill = match self.fill {
            FillKind::Normal => Fill::Normal { mean: level },
            FillKind::Uniform => Fill::UniformUnit,
            FillKind::Mean => Fill::MaskedMean,
        };
        let mechanism = match self.corruption {
            CorruptionKind::None | CorruptionKind::MaskFile => return None,
            CorruptionKind::CentralBlock => Mechanism::CentralBlock {
                height: self.block_size,
                width: self.block_size,
            },
            CorruptionKind::RandomMissing => Mechanism::RandomMissing {
                fraction: self.fraction,
            },
            CorruptionKind::Irregular => Mechanism::Irregular {
                fraction: self.fraction,
            },
            CorruptionKind::DefectFill => Mechanism::DefectFill {
                fraction: self.fraction,
            },
        };
        Some(CorruptionSpec {
            mechanism,
            fill,
            seed,
        })
    }

    /// Canonical text form listing every effective key; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let joinu = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());

        kv("seed", self.seed.to_string());
        for (k, p) in [
            ("out", &self.out),
            ("generator", &self.generator),
            ("fixture", &self.fixture),
            ("mask_file", &self.mask_file),
            ("restored", &self.restored),
            ("clean", &self.clean),
            ("pred_mask", &self.pred_mask),
            ("true_mask", &self.true_mask),
            ("scores", &self.scores),
        ] {
            if let Some(s) = opt_path(p) {
                kv(k, s);
            }
        }
        kv(
            "generator_kind",
            name_of(self.generator_kind, GENERATORS).into(),
        );
        kv("latent_dim", self.latent_dim.to_string());
        kv("image_height", self.image_height.to_string());
        kv("image_width", self.image_width.to_string());
        kv("channels", self.channels.to_string());
        kv("hidden", joinu(&self.hidden));
        kv("leaky_slope", self.leaky_slope.to_string());
        kv("corruption", name_of(self.corruption, CORRUPTIONS).into());
        kv("block_size", self.block_size.to_string());
        kv("fraction", self.fraction.to_string());
        kv("fill", name_of(self.fill, FILLS).into());
        kv("level", self.level.to_string());
        kv("lambda", self.lambda.to_string());
        kv("loss", name_of(self.loss, LOSSES).into());
        kv("iterations", self.iterations.to_string());
        kv("lr_z", self.lr_z.to_string());
        kv("lr_mask", self.lr_mask.to_string());
        kv("lr_theta", self.lr_theta.to_string());
        kv("finetune_start", self.finetune_start.to_string());
        kv(
            "mask_strategy",
            name_of(self.mask_strategy, STRATEGIES).into(),
        );
        kv(
            "latent_bound",
            self.latent_bound.map_or("none".into(), |r| r.to_string()),
        );
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("eps", self.eps.to_string());
        kv("init_z", name_of(self.init_z, INITS).into());
        kv("threshold", self.threshold.to_string());
        kv("lambdas", join(&self.lambdas));
        kv("mask_lambdas", join(&self.mask_lambdas));
        kv("restarts", self.restarts.to_string());
        kv("harness_lr_z", self.harness_lr_z.to_string());
        kv("lattice_radius", self.lattice_radius.to_string());
        kv("lattice_points", self.lattice_points.to_string());
        kv("final_tolerance", self.final_tolerance.to_string());
        kv("monotone_slack", self.monotone_slack.to_string());
        kv("samples", self.samples.to_string());
        kv("levels", join(&self.levels));
        kv("train_pairs", self.train_pairs.to_string());
        kv("epochs", self.epochs.to_string());
        kv("train_lr", self.train_lr.to_string());
        kv(
            "batch_size",
            self.batch_size.map_or("none".into(), |b| b.to_string()),
        );
        kv("decoder_hidden", joinu(&self.decoder_hidden));
        kv("metrics", self.metrics.join(","));
        out
    }
}
