//! Differentiable generators `G(z; θ)` mapping a latent vector to an image.
//!
//! Every generator is a stack of dense layers `h ← act(W·h + b)`. The affine
//! generator is the one-layer, identity-activation case, which makes its
//! ground truth available in closed form.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{AdamParams, AdamState};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{read_exact, Tensor};

pub const MODEL_MAGIC: &[u8; 4] = b"RGM1";
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    Affine,
    Mlp,
}

impl GeneratorKind {
    fn code(self) -> u8 {
        match self {
            GeneratorKind::Affine => 0,
            GeneratorKind::Mlp => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(GeneratorKind::Affine),
            1 => Ok(GeneratorKind::Mlp),
            _ => Err(Error::Format(format!("unknown generator kind code {c}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::LeakyRelu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::LeakyRelu),
            2 => Ok(Activation::Identity),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }
}

/// Latent dimension, output image shape and sampling seed of a manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSpec {
    pub latent_dim: usize,
    pub image_shape: Vec<usize>,
    pub seed: u64,
}

impl ManifoldSpec {
    pub fn new(latent_dim: usize, image_shape: &[usize], seed: u64) -> Result<Self> {
        let spec = Self {
            latent_dim,
            image_shape: image_shape.to_vec(),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "latent dimension must be >= 1".into(),
            ));
        }
        validate_image_shape(&self.image_shape)
    }

    pub fn pixels(&self) -> usize {
        self.image_shape.iter().product()
    }
}

fn validate_image_shape(shape: &[usize]) -> Result<()> {
    let ok = match shape {
        [h, w] => *h >= 2 && *w >= 2,
        [h, w, c] => *h >= 2 && *w >= 2 && (*c == 1 || *c == 3),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "image must be HxW or HxWxC with H, W >= 2".into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub kind: GeneratorKind,
    /// `[d, h1, ..., pixels]`
    pub layer_dims: Vec<usize>,
    /// One per layer.
    pub activations: Vec<Activation>,
    /// `[W1, b1, W2, b2, ...]` with `Wk: [out, in]`, `bk: [out, 1]`.
    pub theta: Vec<Tensor>,
    pub latent_dim: usize,
    pub image_shape: Vec<usize>,
    pub leaky_slope: f64,
}

impl GeneratorModel {
    /// Checks that layer dims, activations and θ shapes agree.
    pub fn validate(&self) -> Result<()> {
        validate_image_shape(&self.image_shape)?;
        let layers = self.activations.len();
        let bad = |reason: String| Err(Error::InvalidArgument(reason));
        if layers == 0 || self.layer_dims.len() != layers + 1 {
            return bad(format!(
                "{} layer dims for {layers} activations",
                self.layer_dims.len()
            ));
        }
        if self.layer_dims[0] != self.latent_dim {
            return bad(format!(
                "first layer input {} != latent dim {}",
                self.layer_dims[0], self.latent_dim
            ));
        }
        let pixels: usize = self.image_shape.iter().product();
        if *self.layer_dims.last().unwrap() != pixels {
            return bad(format!(
                "last layer output {} != image size {pixels}",
                self.layer_dims.last().unwrap()
            ));
        }
        if self.theta.len() != 2 * layers {
            return bad(format!(
                "{} theta tensors for {layers} layers",
                self.theta.len()
            ));
        }
        for (k, w) in self.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            if self.theta[2 * k].shape() != [fan_out, fan_in] {
                return bad(format!(
                    "layer {k} weight shape {:?}",
                    self.theta[2 * k].shape()
                ));
            }
            if self.theta[2 * k + 1].shape() != [fan_out, 1] {
                return bad(format!(
                    "layer {k} bias shape {:?}",
                    self.theta[2 * k + 1].shape()
                ));
            }
        }
        if self.kind == GeneratorKind::Affine
            && (layers != 1 || self.activations[0] != Activation::Identity)
        {
            return bad("affine generator must be a single identity layer".into());
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    /// Places θ on `g` as leaves, trainable iff `trainable`.
    pub fn theta_leaves(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.theta
            .iter()
            .map(|t| g.leaf(t.clone(), trainable))
            .collect()
    }

    fn apply_activation(&self, g: &mut Graph, h: Var, act: Activation) -> Var {
        match act {
            Activation::Tanh => g.tanh(h),
            Activation::LeakyRelu => g.leaky_relu(h, self.leaky_slope),
            Activation::Identity => h,
        }
    }

    /// Image node `G(z; θ)` with θ supplied as graph nodes (see [`Self::theta_leaves`]).
    pub fn forward_with(&self, g: &mut Graph, z: Var, theta: &[Var]) -> Result<Var> {
        let z_shape = g.value(z).shape().to_vec();
        if g.value(z).len() != self.latent_dim {
            return Err(Error::ShapeMismatch {
                op: "generator forward",
                left: z_shape,
                right: vec![self.latent_dim],
            });
        }
        let mut h = g.reshape(z, &[self.latent_dim, 1])?;
        for (k, &act) in self.activations.iter().enumerate() {
            let wh = g.matmul(theta[2 * k], h)?;
            let pre = g.add(wh, theta[2 * k + 1])?;
            h = self.apply_activation(g, pre, act);
        }
        g.reshape(h, &self.image_shape)
    }

    /// Image node plus the θ leaves it was built from.
    pub fn forward(&self, g: &mut Graph, z: Var, trainable_theta: bool) -> Result<(Var, Vec<Var>)> {
        let theta = self.theta_leaves(g, trainable_theta);
        let img = self.forward_with(g, z, &theta)?;
        Ok((img, theta))
    }

    /// Output for a batch: `zs` is `[d, B]`, result is `[pixels, B]`.
    pub fn forward_batch(&self, g: &mut Graph, zs: Var, theta: &[Var]) -> Result<Var> {
        let shape = g.value(zs).shape().to_vec();
        if shape.len() != 2 || shape[0] != self.latent_dim {
            return Err(Error::ShapeMismatch {
                op: "generator forward_batch",
                left: shape,
                right: vec![self.latent_dim, 0],
            });
        }
        let ones = g.constant(Tensor::ones(&[1, shape[1]])?);
        let mut h = zs;
        for (k, &act) in self.activations.iter().enumerate() {
            let wh = g.matmul(theta[2 * k], h)?;
            let bias = g.matmul(theta[2 * k + 1], ones)?;
            let pre = g.add(wh, bias)?;
            h = self.apply_activation(g, pre, act);
        }
        Ok(h)
    }

    /// Evaluates `G(z)` without keeping a graph.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let (img, _) = self.forward(&mut g, zv, false)?;
        Ok(g.value(img).clone())
    }

    pub fn with_theta(&self, theta: Vec<Tensor>) -> Result<Self> {
        let m = Self {
            theta,
            ..self.clone()
        };
        m.validate()?;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&self.leaky_slope.to_le_bytes());
        out.extend_from_slice(&(self.latent_dim as u64).to_le_bytes());
        out.push(self.image_shape.len() as u8);
        for &d in &self.image_shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.push(self.activations.len() as u8);
        for &d in &self.layer_dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend(self.activations.iter().map(|a| a.code()));
        out.push(self.theta.len() as u8);
        for t in &self.theta {
            out.extend_from_slice(&t.to_rgt1_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "model magic")?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format(format!("bad model magic {magic:?}")));
        }
        let kind = GeneratorKind::from_code(read_u8(&mut r)?)?;
        let leaky_slope = f64::from_le_bytes(read_8(&mut r)?);
        let latent_dim = read_usize(&mut r)?;
        let rank = read_u8(&mut r)? as usize;
        let image_shape = (0..rank)
            .map(|_| read_usize(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let layers = read_u8(&mut r)? as usize;
        let layer_dims = (0..=layers)
            .map(|_| read_usize(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let activations = (0..layers)
            .map(|_| Activation::from_code(read_u8(&mut r)?))
            .collect::<Result<Vec<_>>>()?;
        let n_theta = read_u8(&mut r)? as usize;
        let theta = (0..n_theta)
            .map(|_| Tensor::read_rgt1(&mut r))
            .collect::<Result<Vec<_>>>()?;
        if !r.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes in model",
                r.len()
            )));
        }
        let model = Self {
            kind,
            layer_dims,
            activations,
            theta,
            latent_dim,
            image_shape,
            leaky_slope,
        };
        model.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn read_u8(r: &mut &[u8]) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, "model header")?;
    Ok(b[0])
}

fn read_8(r: &mut &[u8]) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "model header")?;
    Ok(b)
}

fn read_usize(r: &mut &[u8]) -> Result<usize> {
    let v = u64::from_le_bytes(read_8(r)?);
    usize::try_from(v)
        .ok()
        .filter(|&v| v < (1 << 32))
        .ok_or_else(|| Error::Format(format!("implausible dimension {v}")))
}

pub fn save_model(model: &GeneratorModel, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GeneratorModel> {
    GeneratorModel::load(path)
}

/// `G(z) = reshape(A z + b)` with unit-norm columns of `A`.
pub fn make_affine_generator(spec: &ManifoldSpec) -> Result<GeneratorModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, p) = (spec.latent_dim, spec.pixels());
    let mut a = Tensor::randn(&[p, d], &mut rng)?;
    for j in 0..d {
        let norm = (0..p)
            .map(|i| a.data()[i * d + j].powi(2))
            .sum::<f64>()
            .sqrt();
        for i in 0..p {
            a.data_mut()[i * d + j] /= norm;
        }
    }
    let b = Tensor::randn(&[p, 1], &mut rng)?;
    let model = GeneratorModel {
        kind: GeneratorKind::Affine,
        layer_dims: vec![d, p],
        activations: vec![Activation::Identity],
        theta: vec![a, b],
        latent_dim: d,
        image_shape: spec.image_shape.clone(),
        leaky_slope: DEFAULT_LEAKY_SLOPE,
    };
    model.validate()?;
    Ok(model)
}

/// Random dense decoder `d → hidden… → pixels`, leaky-ReLU hidden layers
/// and a tanh head. Weights are N(0, gain²/fan_in), biases N(0, 0.1²).
pub fn make_mlp_generator(
    spec: &ManifoldSpec,
    hidden: &[usize],
    leaky_slope: f64,
) -> Result<GeneratorModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut layer_dims = vec![spec.latent_dim];
    layer_dims.extend_from_slice(hidden);
    layer_dims.push(spec.pixels());
    if layer_dims.contains(&0) {
        return Err(Error::InvalidArgument(
            "hidden widths must be positive".into(),
        ));
    }
    let layers = layer_dims.len() - 1;
    let mut theta = Vec::with_capacity(2 * layers);
    let mut activations = Vec::with_capacity(layers);
    for k in 0..layers {
        let (fan_in, fan_out) = (layer_dims[k], layer_dims[k + 1]);
        let last = k + 1 == layers;
        let gain = if last { 1.0 } else { 2.0f64.sqrt() };
        let w = Tensor::randn(&[fan_out, fan_in], &mut rng)?.scale(gain / (fan_in as f64).sqrt());
        let b = Tensor::randn(&[fan_out, 1], &mut rng)?.scale(0.1);
        theta.push(w);
        theta.push(b);
        activations.push(if last {
            Activation::Tanh
        } else {
            Activation::LeakyRelu
        });
    }
    let model = GeneratorModel {
        kind: GeneratorKind::Mlp,
        layer_dims,
        activations,
        theta,
        latent_dim: spec.latent_dim,
        image_shape: spec.image_shape.clone(),
        leaky_slope,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 1e-2,
            batch_size: None,
            seed: 0,
        }
    }
}

/// Stacks latents as columns `[d, B]` and flattened images as columns `[pixels, B]`.
pub fn stack_pairs(pairs: &[(Tensor, Tensor)], idx: &[usize]) -> Result<(Tensor, Tensor)> {
    let d = pairs[idx[0]].0.len();
    let p = pairs[idx[0]].1.len();
    let b = idx.len();
    let mut zs = vec![0.0; d * b];
    let mut xs = vec![0.0; p * b];
    for (col, &i) in idx.iter().enumerate() {
        for (r, &v) in pairs[i].0.data().iter().enumerate() {
            zs[r * b + col] = v;
        }
        for (r, &v) in pairs[i].1.data().iter().enumerate() {
            xs[r * b + col] = v;
        }
    }
    Ok((Tensor::new(vec![d, b], zs)?, Tensor::new(vec![p, b], xs)?))
}

/// Mean squared reconstruction error of `model` on the stacked batch.
pub fn reconstruction_loss(
    g: &mut Graph,
    model: &GeneratorModel,
    theta: &[Var],
    zs: Var,
    xs: Var,
) -> Result<Var> {
    let out = model.forward_batch(g, zs, theta)?;
    let diff = g.sub(out, xs)?;
    let ss = g.sum_squares(diff);
    let n = g.value(xs).len() as f64;
    Ok(g.scalar_mul(1.0 / n, ss))
}

/// Fits θ to `(z_i, x_i)` pairs by ADAM on the mean squared reconstruction
/// error. Returns the trained model and the per-epoch loss.
pub fn train_decoder(
    pairs: &[(Tensor, Tensor)],
    model: &GeneratorModel,
    cfg: &TrainConfig,
) -> Result<(GeneratorModel, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "train_decoder needs at least one pair".into(),
        ));
    }
    for (i, (z, x)) in pairs.iter().enumerate() {
        if z.len() != model.latent_dim || x.shape() != model.image_shape.as_slice() {
            return Err(Error::InvalidArgument(format!(
                "pair {i}: latent {:?} / image {:?} do not match model ({}, {:?})",
                z.shape(),
                x.shape(),
                model.latent_dim,
                model.image_shape
            )));
        }
    }
    if !(cfg.lr >= 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate {}", cfg.lr)));
    }
    let n = pairs.len();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let full = if batch == n {
        Some(stack_pairs(pairs, &order)?)
    } else {
        None
    };

    let mut theta = model.theta.clone();
    let mut states: Vec<AdamState> = theta.iter().map(AdamState::new).collect();
    let params = AdamParams::with_lr(cfg.lr);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            let owned;
            let (zs, xs) = match &full {
                Some(f) => f,
                None => {
                    owned = stack_pairs(pairs, chunk)?;
                    &owned
                }
            };
            let mut g = Graph::new();
            let zv = g.constant(zs.clone());
            let xv = g.constant(xs.clone());
            let tv: Vec<Var> = theta.iter().map(|t| g.param(t.clone())).collect();
            let loss = reconstruction_loss(&mut g, model, &tv, zv, xv)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite { iteration: epoch });
            }
            epoch_loss += lv;
            batches += 1;
            let mut grads = g.backward(loss)?;
            for ((t, st), v) in theta.iter_mut().zip(&mut states).zip(&tv) {
                st.step(t, &grads.take(*v), &params)?;
            }
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok((model.with_theta(theta)?, trace))
}
