//! Python bindings: tensors, generators, corruption, the three solvers and metrics.

// pyo3 0.22 macros expand to `PyErr::from(PyErr)`.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use rgi_core::corruption::{self, CorruptionSpec};
use rgi_core::generator::{self, GeneratorModel, ManifoldSpec};
use rgi_core::solver::{self, InitZ, InversionResult, Loss, MaskStrategy, SolverConfig};
use rgi_core::{metrics, Tensor};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Tensor", module = "rgi")]
#[derive(Clone)]
pub struct PyTensor(pub Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        Tensor::new(shape, data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Tensor::load(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    /// Flat row-major values.
    fn tolist(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.0.shape())
    }
}

#[pyclass(name = "Generator", module = "rgi")]
#[derive(Clone)]
pub struct PyGenerator(pub GeneratorModel);

#[pymethods]
impl PyGenerator {
    #[staticmethod]
    #[pyo3(signature = (latent_dim, image_shape, seed=0))]
    fn affine(latent_dim: usize, image_shape: Vec<usize>, seed: u64) -> PyResult<Self> {
        let spec = ManifoldSpec::new(latent_dim, &image_shape, seed).map_err(err)?;
        generator::make_affine_generator(&spec)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (latent_dim, image_shape, seed=0, hidden=vec![32, 64], leaky_slope=0.2))]
    fn mlp(
        latent_dim: usize,
        image_shape: Vec<usize>,
        seed: u64,
        hidden: Vec<usize>,
        leaky_slope: f64,
    ) -> PyResult<Self> {
        let spec = ManifoldSpec::new(latent_dim, &image_shape, seed).map_err(err)?;
        generator::make_mlp_generator(&spec, &hidden, leaky_slope)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        GeneratorModel::load(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.0.latent_dim
    }

    #[getter]
    fn image_shape(&self) -> Vec<usize> {
        self.0.image_shape.clone()
    }

    fn generate(&self, z: &PyTensor) -> PyResult<PyTensor> {
        self.0.generate(&z.0).map(PyTensor).map_err(err)
    }

    /// `(z*, G(z*))` with `z* ~ N(0, I)` drawn from `seed`.
    fn sample(&self, seed: u64) -> PyResult<(PyTensor, PyTensor)> {
        let (z, x) = corruption::sample_clean(&self.0, seed).map_err(err)?;
        Ok((PyTensor(z), PyTensor(x)))
    }
}

/// Central-block corruption filled with `N(level, 1)`; returns `(image, true_mask, budget)`.
#[pyfunction]
#[pyo3(signature = (clean, block_size=8, level=1.0, seed=0))]
fn corrupt_block(
    clean: &PyTensor,
    block_size: usize,
    level: f64,
    seed: u64,
) -> PyResult<(PyTensor, PyTensor, usize)> {
    let spec = CorruptionSpec::central_block(block_size, level, seed);
    let s = corruption::corrupt(&clean.0, None, &spec).map_err(err)?;
    Ok((PyTensor(s.image), PyTensor(s.true_mask), s.budget))
}

#[pyclass(name = "Result", module = "rgi", get_all)]
pub struct PyResultObj {
    z_hat: PyTensor,
    mask: PyTensor,
    binary_mask: PyTensor,
    restored: PyTensor,
    final_objective: f64,
    loss_trace: Vec<(usize, f64)>,
}

impl From<InversionResult> for PyResultObj {
    fn from(r: InversionResult) -> Self {
        Self {
            z_hat: PyTensor(r.z_hat),
            mask: PyTensor(r.mask),
            binary_mask: PyTensor(r.binary_mask),
            restored: PyTensor(r.restored),
            final_objective: r.final_objective,
            loss_trace: r.loss_trace,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    lam: f64,
    loss: &str,
    iterations: usize,
    lr_z: f64,
    lr_theta: f64,
    finetune_start: Option<usize>,
    strategy: &str,
    seed: u64,
    random_init: bool,
) -> PyResult<SolverConfig> {
    let mut c = SolverConfig::default().with_iterations(iterations);
    c.lambda = lam;
    c.loss = match loss {
        "l2" => Loss::L2,
        "l1" => Loss::L1,
        o => return Err(err(format!("unknown loss `{o}`"))),
    };
    c.mask_strategy = match strategy {
        "closed_form" => MaskStrategy::ClosedForm,
        "gradient" => MaskStrategy::Gradient,
        o => return Err(err(format!("unknown mask strategy `{o}`"))),
    };
    c.lr_z = lr_z;
    c.lr_theta = lr_theta;
    if let Some(f) = finetune_start {
        c.finetune_start = f;
    }
    c.seed = seed;
    c.init_z = if random_init {
        InitZ::SeededNormal
    } else {
        InitZ::Zero
    };
    c.validate().map_err(err)?;
    Ok(c)
}

macro_rules! solver_fn {
    ($name:ident, $core:path) => {
        #[pyfunction]
        #[pyo3(signature = (
                    model, image, lam=0.1, loss="l2", iterations=2000, lr_z=0.1, lr_theta=1e-5,
                    finetune_start=None, strategy="closed_form", seed=0, random_init=false
                ))]
        #[allow(clippy::too_many_arguments)]
        fn $name(
            py: Python<'_>,
            model: &PyGenerator,
            image: &PyTensor,
            lam: f64,
            loss: &str,
            iterations: usize,
            lr_z: f64,
            lr_theta: f64,
            finetune_start: Option<usize>,
            strategy: &str,
            seed: u64,
            random_init: bool,
        ) -> PyResult<PyResultObj> {
            let c = config(
                lam,
                loss,
                iterations,
                lr_z,
                lr_theta,
                finetune_start,
                strategy,
                seed,
                random_init,
            )?;
            let (m, x) = (&model.0, &image.0);
            py.allow_threads(|| $core(m, x, &c))
                .map(Into::into)
                .map_err(err)
        }
    };
}

solver_fn!(solve_baseline, solver::invert_baseline);
solver_fn!(solve_rgi, solver::solve_rgi);
solver_fn!(solve_rrgi, solver::solve_rrgi);

#[pyfunction]
fn optimal_mask_pixel(r: f64, lam: f64) -> f64 {
    solver::optimal_mask_pixel(r, lam)
}

#[pyfunction]
fn robust_loss_pixel(r: f64, lam: f64) -> f64 {
    solver::robust_loss_pixel(r, lam)
}

#[pyfunction]
fn rmse(restored: Vec<PyTensor>, truth: Vec<PyTensor>) -> PyResult<f64> {
    let a: Vec<Tensor> = restored.into_iter().map(|t| t.0).collect();
    let b: Vec<Tensor> = truth.into_iter().map(|t| t.0).collect();
    metrics::rmse(&a, &b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a, b, peak=metrics::DEFAULT_PEAK))]
fn psnr(a: &PyTensor, b: &PyTensor, peak: f64) -> PyResult<f64> {
    metrics::psnr(&a.0, &b.0, peak).map_err(err)
}

#[pyfunction]
fn ssim(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    metrics::ssim(&a.0, &b.0).map_err(err)
}

#[pyfunction]
fn dice(pred: &PyTensor, truth: &PyTensor) -> PyResult<f64> {
    metrics::dice(&pred.0, &truth.0).map_err(err)
}

#[pyfunction]
fn pixel_auroc(scores: &PyTensor, truth: &PyTensor) -> PyResult<f64> {
    metrics::pixel_auroc(&scores.0, &truth.0).map_err(err)
}

#[pymodule]
fn rgi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyResultObj>()?;
    m.add_function(wrap_pyfunction!(corrupt_block, m)?)?;
    m.add_function(wrap_pyfunction!(solve_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rgi, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rrgi, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_mask_pixel, m)?)?;
    m.add_function(wrap_pyfunction!(robust_loss_pixel, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_auroc, m)?)?;
    Ok(())
}
