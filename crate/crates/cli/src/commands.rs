//! Subcommand implementations. Each writes into its own output directory
//! and echoes the effective configuration there as `config.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rgi_core::corruption::{self, CorruptedSample, CorruptionSpec, Fill, Mechanism};
use rgi_core::generator::{self, GeneratorModel, ManifoldSpec, TrainConfig};
use rgi_core::metrics::{self, format_sig9, MetricReport};
use rgi_core::oracle::{self, HarnessOptions, LatticeSpec};
use rgi_core::solver::{self, InversionResult, Loss, SolverConfig, Truth};
use rgi_core::{pnm, Tensor};

use crate::config::{CorruptionKind, ExperimentConfig, FillKind, GeneratorChoice};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Baseline,
    Rgi,
    Rrgi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Rgi => "rgi",
            Method::Rrgi => "rrgi",
        }
    }
}

/// Observed image, the generator to invert against, and whatever ground
/// truth is available.
pub struct Problem {
    pub model: GeneratorModel,
    pub image: Tensor,
    pub clean: Option<Tensor>,
    pub mask: Option<Tensor>,
}

impl Problem {
    pub fn truth(&self) -> Option<Truth<'_>> {
        match (&self.clean, &self.mask) {
            (Some(clean), Some(mask)) => Some(Truth { clean, mask }),
            _ => None,
        }
    }
}

fn prepare_out(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    write_text(out, "config.txt", &cfg.to_text())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

fn write_tensor(dir: &Path, name: &str, t: &Tensor) -> Result<()> {
    let p = dir.join(format!("{name}.rgt"));
    t.save(&p)
        .with_context(|| format!("writing {}", p.display()))
}

fn write_pgm(dir: &Path, name: &str, img: &Tensor) -> Result<()> {
    let p = dir.join(format!("{name}.pgm"));
    pnm::write_image(img, &p).with_context(|| format!("writing {}", p.display()))
}

fn write_mask(dir: &Path, name: &str, mask: &Tensor) -> Result<()> {
    write_tensor(dir, name, mask)?;
    let p = dir.join(format!("{name}.pgm"));
    fs::write(&p, pnm::encode_mask(mask)?).with_context(|| format!("writing {}", p.display()))
}

fn is_netpbm(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
}

/// Reads an RGT1 tensor, or a PGM/PPM image mapped to `[-1, 1]`.
pub fn read_tensor(p: &Path) -> Result<Tensor> {
    let t = if is_netpbm(p) {
        pnm::read_image(p)
    } else {
        Tensor::load(p)
    };
    t.with_context(|| format!("reading {}", p.display()))
}

/// As [`read_tensor`]; PGM masks are thresholded at mid-gray.
pub fn read_mask(p: &Path) -> Result<Tensor> {
    let t = read_tensor(p)?;
    Ok(if is_netpbm(p) {
        t.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
    } else {
        t
    })
}

pub fn load_generator(p: &Path) -> Result<GeneratorModel> {
    if !p.exists() {
        bail!("generator file {} does not exist", p.display());
    }
    generator::load_model(p).with_context(|| format!("loading generator {}", p.display()))
}

/// The configured generator: loaded from `generator` if set, otherwise
/// built from the fixture keys with `seed`.
pub fn build_generator(cfg: &ExperimentConfig, seed: u64) -> Result<GeneratorModel> {
    if let Some(p) = &cfg.generator {
        return load_generator(p);
    }
    let spec = ManifoldSpec::new(cfg.latent_dim, &cfg.image_shape(), seed)?;
    Ok(match cfg.generator_kind {
        GeneratorChoice::Affine => generator::make_affine_generator(&spec)?,
        GeneratorChoice::Mlp => generator::make_mlp_generator(&spec, &cfg.hidden, cfg.leaky_slope)?,
    })
}

/// Samples a clean image from `model` and corrupts it per the config.
pub fn build_sample(
    cfg: &ExperimentConfig,
    model: &GeneratorModel,
    latent_seed: u64,
    corruption_seed: u64,
    level: f64,
) -> Result<CorruptedSample> {
    let (z, clean) = corruption::sample_clean(model, latent_seed)?;
    let spec = match (cfg.corruption_spec(level, corruption_seed), cfg.corruption) {
        (Some(spec), _) => spec,
        (None, kind) => {
            let (h, w, _) = corruption::spatial_dims(clean.shape())?;
            let mask = if kind == CorruptionKind::MaskFile {
                let file = cfg.mask_file.as_ref().expect("checked at parse time");
                corruption::load_irregular_masks(file, h, w)?
                    .into_iter()
                    .next()
                    .with_context(|| format!("no masks found at {}", file.display()))?
            } else {
                Tensor::zeros(&[h, w])?
            };
            let fill = match cfg.fill {
                FillKind::Normal => Fill::Normal { mean: level },
                FillKind::Uniform => Fill::UniformUnit,
                FillKind::Mean => Fill::MaskedMean,
            };
            CorruptionSpec {
                mechanism: Mechanism::Mask(mask),
                fill,
                seed: corruption_seed,
            }
        }
    };
    Ok(corruption::corrupt(&clean, Some(&z), &spec)?)
}

/// Seeds derived from the master seed for the single-fixture commands.
fn fixture_seeds(seed: u64) -> (u64, u64, u64) {
    (seed, seed.wrapping_add(1), seed.wrapping_add(2))
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    if let Some(dir) = &cfg.fixture {
        let model = match &cfg.generator {
            Some(p) => load_generator(p)?,
            None => load_generator(&dir.join("generator.rgm"))?,
        };
        let optional = |name: &str| -> Result<Option<Tensor>> {
            let p = dir.join(name);
            if p.exists() {
                read_tensor(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        return Ok(Problem {
            model,
            image: read_tensor(&dir.join("corrupted.rgt"))?,
            clean: optional("clean.rgt")?,
            mask: optional("mask.rgt")?,
        });
    }
    let (gs, ls, cs) = fixture_seeds(cfg.seed);
    let model = build_generator(cfg, gs)?;
    let s = build_sample(cfg, &model, ls, cs, cfg.level)?;
    Ok(Problem {
        model,
        image: s.image,
        clean: Some(s.clean),
        mask: Some(s.true_mask),
    })
}

fn shape_text(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn make_fixture(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (gs, ls, cs) = fixture_seeds(cfg.seed);
    let model = build_generator(cfg, gs)?;
    let s = build_sample(cfg, &model, ls, cs, cfg.level)?;
    prepare_out(out, cfg)?;
    model.save(out.join("generator.rgm"))?;
    write_tensor(
        out,
        "latent",
        s.true_latent.as_ref().expect("sampled latent"),
    )?;
    for (name, t) in [("clean", &s.clean), ("corrupted", &s.image)] {
        write_tensor(out, name, t)?;
        write_pgm(out, name, t)?;
    }
    write_mask(out, "mask", &s.true_mask)?;

    let mut meta = String::new();
    let _ = writeln!(
        meta,
        "generator_kind = {}",
        if model.kind == generator::GeneratorKind::Affine {
            "affine"
        } else {
            "mlp"
        }
    );
    let _ = writeln!(meta, "latent_dim = {}", model.latent_dim);
    let _ = writeln!(meta, "image_shape = {}", shape_text(&model.image_shape));
    let _ = writeln!(meta, "n0 = {}", s.budget);
    let _ = writeln!(meta, "level = {}", cfg.level);
    let _ = writeln!(meta, "seed = {}", cfg.seed);
    write_text(out, "metadata.txt", &meta)
}

pub fn train_decoder(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let truth = build_generator(cfg, cfg.seed)?;
    let pairs: Vec<(Tensor, Tensor)> = (0..cfg.train_pairs as u64)
        .map(|i| corruption::sample_clean(&truth, cfg.seed.wrapping_add(1000 + i)))
        .collect::<rgi_core::Result<_>>()?;
    let spec = ManifoldSpec::new(
        truth.latent_dim,
        &truth.image_shape,
        cfg.seed.wrapping_add(1),
    )?;
    let init = generator::make_mlp_generator(&spec, &cfg.decoder_hidden, cfg.leaky_slope)?;
    let tc = TrainConfig {
        epochs: cfg.epochs,
        lr: cfg.train_lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let (decoder, trace) = generator::train_decoder(&pairs, &init, &tc)?;
    prepare_out(out, cfg)?;
    truth.save(out.join("truth_generator.rgm"))?;
    decoder.save(out.join("decoder.rgm"))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in trace.iter().enumerate() {
        let _ = writeln!(csv, "{e},{}", format_sig9(*l));
    }
    write_text(out, "train_trace.csv", &csv)?;
    let final_mse = trace.last().copied().unwrap_or(f64::NAN);
    write_text(
        out,
        "metadata.txt",
        &format!(
            "pairs = {}\nepochs = {}\ndecoder_layers = {}\nfinal_mse = {}\n",
            pairs.len(),
            cfg.epochs,
            shape_text(&decoder.layer_dims),
            format_sig9(final_mse)
        ),
    )
}

pub fn run_method(
    method: Method,
    model: &GeneratorModel,
    x: &Tensor,
    sc: &SolverConfig,
) -> Result<InversionResult> {
    let r = match method {
        Method::Baseline => solver::invert_baseline(model, x, sc),
        Method::Rgi => solver::solve_rgi(model, x, sc),
        Method::Rrgi => solver::solve_rrgi(model, x, sc),
    };
    Ok(r?)
}

/// Requested metrics of `result` against ground truth; a metric that is
/// undefined for this input (e.g. SSIM on a small image) is NaN.
pub fn metric_values(
    names: &[String],
    result: &InversionResult,
    clean: &Tensor,
    mask: &Tensor,
) -> Vec<f64> {
    names
        .iter()
        .map(|m| {
            let v = match m.as_str() {
                "rmse" => metrics::rmse(
                    std::slice::from_ref(&result.restored),
                    std::slice::from_ref(clean),
                ),
                "psnr" => metrics::psnr(&result.restored, clean, metrics::DEFAULT_PEAK),
                "ssim" => metrics::ssim(&result.restored, clean),
                "dice" => metrics::dice(&result.binary_mask, mask),
                "auroc" => metrics::pixel_auroc(&result.mask, mask),
                _ => unreachable!("metric names are validated at parse time"),
            };
            v.unwrap_or(f64::NAN)
        })
        .collect()
}

fn write_result(out: &Path, method: Method, r: &InversionResult) -> Result<()> {
    write_tensor(out, "z_hat", &r.z_hat)?;
    write_tensor(out, "mask", &r.mask)?;
    write_mask(out, "binary_mask", &r.binary_mask)?;
    write_tensor(out, "restored", &r.restored)?;
    write_pgm(out, "restored", &r.restored)?;
    let mut trace = String::from("iter,objective\n");
    for (it, v) in &r.loss_trace {
        let _ = writeln!(trace, "{it},{}", format_sig9(*v));
    }
    write_text(out, "loss_trace.csv", &trace)?;
    write_text(
        out,
        "result.txt",
        &format!(
            "method = {}\nlambda = {}\niterations = {}\nfinal_objective = {}\nmask_pixels = {}\n",
            method.name(),
            r.config.lambda,
            r.config.iterations,
            format_sig9(r.final_objective),
            r.binary_mask.count_nonzero(0.0)
        ),
    )
}

pub fn solve(cfg: &ExperimentConfig, method: Method, out: &Path) -> Result<InversionResult> {
    let p = build_problem(cfg)?;
    let r = run_method(method, &p.model, &p.image, &cfg.solver())?;
    prepare_out(out, cfg)?;
    write_result(out, method, &r)?;
    if let Some(theta) = &r.theta_final {
        p.model
            .with_theta(theta.clone())?
            .save(out.join("finetuned_generator.rgm"))?;
    }
    if let Some(t) = p.truth() {
        let names: Vec<&str> = cfg.metrics.iter().map(String::as_str).collect();
        let mut report = MetricReport::new(&names);
        report.push("0", metric_values(&cfg.metrics, &r, t.clean, t.mask))?;
        write_text(out, "metrics.csv", &report.to_csv())?;
    }
    Ok(r)
}

fn opt_sig9(v: Option<f64>) -> String {
    v.map(format_sig9).unwrap_or_else(|| "nan".into())
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<solver::SweepPoint>> {
    if !solver::strictly_decreasing(&cfg.lambdas) || cfg.lambdas.is_empty() {
        bail!("`lambdas` must be a non-empty, strictly decreasing list");
    }
    let p = build_problem(cfg)?;
    let points = solver::sweep_lambda(&p.model, &p.image, &cfg.lambdas, &cfg.solver(), p.truth())?;
    prepare_out(out, cfg)?;
    let mut csv = String::from("lambda,rmse,dice,psnr,ssim\n");
    for (i, pt) in points.iter().enumerate() {
        let dir = out.join(format!("lambda_{i:02}"));
        fs::create_dir_all(&dir)?;
        write_tensor(&dir, "restored", &pt.result.restored)?;
        write_tensor(&dir, "mask", &pt.result.mask)?;
        write_mask(&dir, "binary_mask", &pt.result.binary_mask)?;
        let m = &pt.metrics;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            format_sig9(pt.lambda),
            opt_sig9(m.rmse),
            opt_sig9(m.dice),
            opt_sig9(m.psnr),
            opt_sig9(m.ssim)
        );
    }
    write_text(out, "summary.csv", &csv)?;
    Ok(points)
}

pub struct VerifyOutcome {
    pub latent: oracle::TheoremReport,
    pub mask: oracle::TheoremReport,
}

impl VerifyOutcome {
    pub fn pass(&self) -> bool {
        self.latent.pass && self.mask.pass
    }
}

pub fn harness_options(cfg: &ExperimentConfig) -> HarnessOptions {
    let d = HarnessOptions::default();
    HarnessOptions {
        solver: SolverConfig {
            lr_z: cfg.harness_lr_z,
            seed: cfg.seed,
            ..d.solver
        },
        restarts: cfg.restarts,
        monotone_slack: cfg.monotone_slack,
        final_tolerance: cfg.final_tolerance,
    }
}

/// The verification fixture and its lattice: the standard affine instance,
/// or the configured generator with its latent snapped onto the lattice.
pub fn verify_fixture(
    cfg: &ExperimentConfig,
) -> Result<(GeneratorModel, CorruptedSample, LatticeSpec)> {
    let lattice = |dim| LatticeSpec {
        dim,
        radius: cfg.lattice_radius,
        points_per_axis: cfg.lattice_points,
    };
    match &cfg.generator {
        None => {
            let l = lattice(oracle::standard_lattice().dim);
            l.validate()?;
            let (model, sample) = oracle::standard_fixture_on(cfg.seed, &l)?;
            Ok((model, sample, l))
        }
        Some(p) => {
            let model = load_generator(p)?;
            let l = lattice(model.latent_dim);
            l.validate()?;
            let (z, _) = corruption::sample_clean(&model, cfg.seed.wrapping_add(2))?;
            let z_star = l.snap(&z);
            let clean = model.generate(&z_star)?;
            let spec = cfg
                .corruption_spec(cfg.level, cfg.seed.wrapping_add(1))
                .context("verify needs a procedural corruption")?;
            let sample = corruption::corrupt(&clean, Some(&z_star), &spec)?;
            Ok((model, sample, l))
        }
    }
}

pub fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<VerifyOutcome> {
    let (model, sample, lattice) = verify_fixture(cfg)?;
    let opts = harness_options(cfg);
    let latent = oracle::verify_theorem1(&model, &sample, &cfg.lambdas, &lattice, &opts)?;
    let mask = oracle::verify_theorem2(&model, &sample, &cfg.mask_lambdas, cfg.threshold, &opts)?;
    prepare_out(out, cfg)?;
    write_text(out, "latent_recovery.csv", &latent.to_csv())?;
    write_text(out, "latent_recovery.txt", &latent.to_table())?;
    write_text(out, "mask_recovery.csv", &mask.to_csv())?;
    write_text(out, "mask_recovery.txt", &mask.to_table())?;
    let outcome = VerifyOutcome { latent, mask };
    let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
    write_text(
        out,
        "verdict.txt",
        &format!(
            "latent_recovery = {}\nmask_recovery = {}\noverall = {}\n",
            verdict(outcome.latent.pass),
            verdict(outcome.mask.pass),
            verdict(outcome.pass())
        ),
    )?;
    Ok(outcome)
}

/// `(e, method, rmse)` for the l2 / l1 baselines and RGI.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(f64, &'static str, f64)>> {
    if cfg.samples == 0 {
        bail!("`samples` must be positive");
    }
    let model = build_generator(cfg, cfg.seed)?;
    let base = cfg.solver();
    let methods: [(&str, Method, Loss); 3] = [
        ("l2", Method::Baseline, Loss::L2),
        ("l1", Method::Baseline, Loss::L1),
        ("rgi", Method::Rgi, Loss::L2),
    ];
    let mut rows = Vec::new();
    for (j, &e) in cfg.levels.iter().enumerate() {
        let mut restored: [Vec<Tensor>; 3] = Default::default();
        let mut clean = Vec::with_capacity(cfg.samples);
        for i in 0..cfg.samples as u64 {
            let s = build_sample(
                cfg,
                &model,
                cfg.seed.wrapping_add(10_000 + i),
                cfg.seed.wrapping_add(20_000 + 1_000 * j as u64 + i),
                e,
            )?;
            for (k, (_, method, loss)) in methods.iter().enumerate() {
                let sc = SolverConfig {
                    loss: *loss,
                    ..base.clone()
                };
                restored[k].push(run_method(*method, &model, &s.image, &sc)?.restored);
            }
            clean.push(s.clean);
        }
        for (k, (name, _, _)) in methods.iter().enumerate() {
            rows.push((e, *name, metrics::rmse(&restored[k], &clean)?));
        }
    }
    prepare_out(out, cfg)?;
    let mut csv = String::from("e,method,rmse\n");
    for (e, m, v) in &rows {
        let _ = writeln!(csv, "{},{m},{}", format_sig9(*e), format_sig9(*v));
    }
    write_text(out, "simulate.csv", &csv)?;
    Ok(rows)
}

/// Metrics between files named by `restored`, `clean`, `pred_mask`,
/// `true_mask` and `scores`.
pub fn metrics_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(String, f64)>> {
    let need = |p: &Option<PathBuf>, key: &str, metric: &str| -> Result<Tensor> {
        match p {
            Some(p) if key.ends_with("mask") => read_mask(p),
            Some(p) => read_tensor(p),
            None => bail!("metric `{metric}` needs `{key}`"),
        }
    };
    let mut values = Vec::new();
    for m in &cfg.metrics {
        let v = match m.as_str() {
            "rmse" | "psnr" | "ssim" => {
                let a = need(&cfg.restored, "restored", m)?;
                let b = need(&cfg.clean, "clean", m)?;
                match m.as_str() {
                    "rmse" => metrics::rmse(&[a], &[b])?,
                    "psnr" => metrics::psnr(&a, &b, metrics::DEFAULT_PEAK)?,
                    _ => metrics::ssim(&a, &b)?,
                }
            }
            "dice" => metrics::dice(
                &need(&cfg.pred_mask, "pred_mask", m)?,
                &need(&cfg.true_mask, "true_mask", m)?,
            )?,
            "auroc" => metrics::pixel_auroc(
                &need(&cfg.scores, "scores", m)?,
                &need(&cfg.true_mask, "true_mask", m)?,
            )?,
            _ => unreachable!("metric names are validated at parse time"),
        };
        values.push((m.clone(), v));
    }
    prepare_out(out, cfg)?;
    let names: Vec<&str> = values.iter().map(|(n, _)| n.as_str()).collect();
    let mut report = MetricReport::new(&names);
    report.push("0", values.iter().map(|(_, v)| *v).collect())?;
    write_text(out, "metrics.csv", &report.to_csv())?;
    Ok(values)
}
