//! Corrupted-sample construction with recorded ground truth.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::generator::GeneratorModel;
use crate::pnm;
use crate::tensor::Tensor;

/// Where the corruption goes.
#[derive(Clone, Debug, PartialEq)]
pub enum Mechanism {
    /// Centered `height × width` block; a zero-sized block corrupts nothing.
    CentralBlock { height: usize, width: usize },
    /// Exactly `round(fraction · H·W)` pixels chosen uniformly.
    RandomMissing { fraction: f64 },
    /// Seeded random-walk stroke grown to at least `fraction · H·W` pixels.
    Irregular { fraction: f64 },
    /// Irregular stroke filled with the masked mean (synthetic defect).
    DefectFill { fraction: f64 },
    /// Caller-supplied spatial mask.
    Mask(Tensor),
}

/// What the corrupted pixels are replaced with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fill {
    /// `N(mean, 1)`, independently per entry.
    Normal { mean: f64 },
    /// `U[-1, 1]`, the interval reading of "N(−1,1)".
    UniformUnit,
    /// Per-channel mean of the clean image over the mask.
    MaskedMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionSpec {
    pub mechanism: Mechanism,
    pub fill: Fill,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn central_block(size: usize, level: f64, seed: u64) -> Self {
        Self {
            mechanism: Mechanism::CentralBlock {
                height: size,
                width: size,
            },
            fill: Fill::Normal { mean: level },
            seed,
        }
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        match &self.mechanism {
            Mechanism::CentralBlock {
                height: bh,
                width: bw,
            } => {
                if *bh > height || *bw > width {
                    return Err(Error::InvalidArgument(format!(
                        "block {bh}x{bw} exceeds image {height}x{width}"
                    )));
                }
            }
            Mechanism::RandomMissing { fraction }
            | Mechanism::Irregular { fraction }
            | Mechanism::DefectFill { fraction } => {
                if !frac_ok(*fraction) {
                    return Err(Error::InvalidArgument(format!(
                        "fraction {fraction} outside (0, 1)"
                    )));
                }
            }
            Mechanism::Mask(m) => {
                if m.shape() != [height, width] || !m.is_binary() {
                    return Err(Error::InvalidArgument(format!(
                        "mask must be binary {height}x{width}, got {:?}",
                        m.shape()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedSample {
    pub image: Tensor,
    pub clean: Tensor,
    /// Same shape as `image`; 1 marks a corrupted entry.
    pub true_mask: Tensor,
    pub true_latent: Option<Tensor>,
    pub budget: usize,
    pub provenance: Option<CorruptionSpec>,
}

impl CorruptedSample {
    /// Checks the ground-truth invariants.
    pub fn check(&self) -> Result<()> {
        self.image.check_same_shape(&self.clean, "sample")?;
        self.image.check_same_shape(&self.true_mask, "sample")?;
        if !self.true_mask.is_binary() {
            return Err(Error::Precondition("true mask is not binary".into()));
        }
        if self.true_mask.count_nonzero(0.0) != self.budget {
            return Err(Error::Precondition("budget != |M*|".into()));
        }
        let outside_equal = self
            .image
            .data()
            .iter()
            .zip(self.clean.data())
            .zip(self.true_mask.data())
            .all(|((x, c), m)| *m == 1.0 || x == c);
        if !outside_equal {
            return Err(Error::Precondition(
                "image differs from clean outside the mask".into(),
            ));
        }
        Ok(())
    }
}

/// Image height, width and channel count.
pub fn spatial_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [h, w] => Ok((*h, *w, 1)),
        [h, w, c] => Ok((*h, *w, *c)),
        s => Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "expected HxW or HxWxC".into(),
        }),
    }
}

/// `z* ~ N(0, I)` from `seed` and its image.
pub fn sample_clean(model: &GeneratorModel, seed: u64) -> Result<(Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Tensor::randn(&[model.latent_dim], &mut rng)?;
    let clean = model.generate(&z)?;
    Ok((z, clean))
}

fn central_block_mask(h: usize, w: usize, bh: usize, bw: usize) -> Tensor {
    let (r0, c0) = ((h - bh) / 2, (w - bw) / 2);
    let mut m = vec![0.0; h * w];
    for r in r0..r0 + bh {
        for c in c0..c0 + bw {
            m[r * w + c] = 1.0;
        }
    }
    Tensor::new(vec![h, w], m).expect("valid mask shape")
}

fn random_missing_mask<R: Rng>(h: usize, w: usize, fraction: f64, rng: &mut R) -> Tensor {
    let k = (fraction * (h * w) as f64).round() as usize;
    let mut idx: Vec<usize> = (0..h * w).collect();
    idx.shuffle(rng);
    let mut m = vec![0.0; h * w];
    for &i in &idx[..k] {
        m[i] = 1.0;
    }
    Tensor::new(vec![h, w], m).expect("valid mask shape")
}

/// Random-walk stroke stamped with a 3×3 brush until the target area is reached.
pub fn irregular_mask<R: Rng>(h: usize, w: usize, fraction: f64, rng: &mut R) -> Tensor {
    let target = ((fraction * (h * w) as f64).round() as usize).clamp(1, h * w);
    let mut m = vec![0.0; h * w];
    let mut count = 0;
    let (mut r, mut c) = (rng.gen_range(0..h) as i64, rng.gen_range(0..w) as i64);
    let mut dir = rng.gen_range(0..4);
    while count < target {
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    let i = rr as usize * w + cc as usize;
                    if m[i] == 0.0 && count < target {
                        m[i] = 1.0;
                        count += 1;
                    }
                }
            }
        }
        // mostly keep heading, sometimes turn
        if rng.gen_bool(0.3) {
            dir = rng.gen_range(0..4);
        }
        let (dr, dc) = [(0, 1), (1, 0), (0, -1), (-1, 0)][dir];
        r = (r + dr).clamp(0, h as i64 - 1);
        c = (c + dc).clamp(0, w as i64 - 1);
    }
    Tensor::new(vec![h, w], m).expect("valid mask shape")
}

/// Repeats a spatial `[H,W]` mask across `channels`.
fn expand_mask(spatial: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let (_, _, ch) = spatial_dims(shape)?;
    if shape.len() == 2 {
        return Ok(spatial.clone());
    }
    let data = spatial
        .data()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, ch))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

fn masked_channel_means(clean: &Tensor, mask: &Tensor, ch: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; ch];
    let mut counts = vec![0usize; ch];
    for (i, (&x, &m)) in clean.data().iter().zip(mask.data()).enumerate() {
        if m == 1.0 {
            sums[i % ch] += x;
            counts[i % ch] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect()
}

/// Applies `spec` to `clean`, recording the mask and budget.
pub fn corrupt(
    clean: &Tensor,
    true_latent: Option<&Tensor>,
    spec: &CorruptionSpec,
) -> Result<CorruptedSample> {
    let (h, w, ch) = spatial_dims(clean.shape())?;
    spec.validate(h, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (spatial, fill) = match &spec.mechanism {
        Mechanism::CentralBlock { height, width } => {
            (central_block_mask(h, w, *height, *width), spec.fill)
        }
        Mechanism::RandomMissing { fraction } => {
            (random_missing_mask(h, w, *fraction, &mut rng), spec.fill)
        }
        Mechanism::Irregular { fraction } => (irregular_mask(h, w, *fraction, &mut rng), spec.fill),
        Mechanism::DefectFill { fraction } => {
            (irregular_mask(h, w, *fraction, &mut rng), Fill::MaskedMean)
        }
        Mechanism::Mask(m) => (m.clone(), spec.fill),
    };
    let mask = expand_mask(&spatial, clean.shape())?;
    let mut image = clean.clone();
    match fill {
        Fill::Normal { mean } => {
            let dist = Normal::new(mean, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for (x, &m) in image.data_mut().iter_mut().zip(mask.data()) {
                if m == 1.0 {
                    *x = dist.sample(&mut rng);
                }
            }
        }
        Fill::UniformUnit => {
            let dist = Uniform::new_inclusive(-1.0, 1.0);
            for (x, &m) in image.data_mut().iter_mut().zip(mask.data()) {
                if m == 1.0 {
                    *x = dist.sample(&mut rng);
                }
            }
        }
        Fill::MaskedMean => {
            let means = masked_channel_means(clean, &mask, ch);
            for (i, (x, &m)) in image.data_mut().iter_mut().zip(mask.data()).enumerate() {
                if m == 1.0 {
                    *x = means[i % ch].expect("channel has masked entries");
                }
            }
        }
    }
    let budget = mask.count_nonzero(0.0);
    Ok(CorruptedSample {
        image,
        clean: clean.clone(),
        true_mask: mask,
        true_latent: true_latent.cloned(),
        budget,
        provenance: Some(spec.clone()),
    })
}

/// `x = (1−M)⊙clean + M⊙C` with `C` the per-channel mean of `clean` over `M`.
/// `mask` is spatial `[H,W]` or full image shape.
pub fn synthesize_defect(clean: &Tensor, mask: &Tensor) -> Result<CorruptedSample> {
    let (h, w, _) = spatial_dims(clean.shape())?;
    if !mask.is_binary() {
        return Err(Error::InvalidArgument("defect mask must be binary".into()));
    }
    let spatial = if mask.shape() == [h, w] {
        mask.clone()
    } else if mask.shape() == clean.shape() && clean.shape().len() == 3 {
        // collapse identical channels
        let ch = clean.shape()[2];
        let data: Vec<f64> = mask.data().chunks(ch).map(|c| c[0]).collect();
        Tensor::new(vec![h, w], data)?
    } else {
        return Err(Error::ShapeMismatch {
            op: "synthesize_defect",
            left: clean.shape().to_vec(),
            right: mask.shape().to_vec(),
        });
    };
    if spatial.count_nonzero(0.0) == 0 {
        return Err(Error::InvalidArgument("defect mask is empty".into()));
    }
    corrupt(
        clean,
        None,
        &CorruptionSpec {
            mechanism: Mechanism::Mask(spatial),
            fill: Fill::MaskedMean,
            seed: 0,
        },
    )
}

/// Nearest-neighbour scale to cover `(h, w)`, then center crop.
fn fit_mask(r: &pnm::Raster, h: usize, w: usize) -> Tensor {
    let scale = (h as f64 / r.height as f64)
        .max(w as f64 / r.width as f64)
        .max(1.0);
    let (sh, sw) = (
        ((r.height as f64 * scale).ceil() as usize).max(h),
        ((r.width as f64 * scale).ceil() as usize).max(w),
    );
    let (r0, c0) = ((sh - h) / 2, (sw - w) / 2);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let src_r = (((i + r0) as f64 / scale) as usize).min(r.height - 1);
            let src_c = (((j + c0) as f64 / scale) as usize).min(r.width - 1);
            let p = r.pixels[(src_r * r.width + src_c) * r.channels];
            out[i * w + j] = if p >= 128 { 1.0 } else { 0.0 };
        }
    }
    Tensor::new(vec![h, w], out).expect("valid mask shape")
}

/// Reads PGM masks, thresholded at 128, fitted to `(height, width)`.
/// `path` may be a single file or a directory of `*.pgm` files (sorted by name).
pub fn load_irregular_masks(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
) -> Result<Vec<Tensor>> {
    let path = path.as_ref();
    let files = if path.is_dir() {
        let mut v: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|f| {
            let r = pnm::decode(&std::fs::read(f)?)?;
            if r.channels != 1 {
                return Err(Error::Format(format!("{}: mask must be P5", f.display())));
            }
            Ok(fit_mask(&r, height, width))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{make_affine_generator, ManifoldSpec};

    fn clean16() -> (Tensor, Tensor) {
        let m = make_affine_generator(&ManifoldSpec::new(4, &[16, 16], 1).unwrap()).unwrap();
        sample_clean(&m, 5).unwrap()
    }

    #[test]
    fn sample_clean_is_deterministic_and_affine() {
        let m = make_affine_generator(&ManifoldSpec::new(4, &[16, 16], 1).unwrap()).unwrap();
        let (z1, c1) = sample_clean(&m, 5).unwrap();
        let (z2, c2) = sample_clean(&m, 5).unwrap();
        assert_eq!((&z1, &c1), (&z2, &c2));
        let manual = m.theta[0].matmul(&z1).unwrap().add(&m.theta[1]).unwrap();
        assert_eq!(manual.data(), c1.data());
        let (z3, _) = sample_clean(&m, 6).unwrap();
        assert_ne!(z1, z3);
    }

    #[test]
    fn zero_area_block_is_identity() {
        let (z, clean) = clean16();
        let s = corrupt(&clean, Some(&z), &CorruptionSpec::central_block(0, 1.0, 3)).unwrap();
        assert_eq!(s.image, clean);
        assert_eq!(s.budget, 0);
    }

    #[test]
    fn central_block_counts() {
        let (z, clean) = clean16();
        let s = corrupt(&clean, Some(&z), &CorruptionSpec::central_block(8, 1.0, 3)).unwrap();
        assert_eq!(s.budget, 64);
        s.check().unwrap();
        // block occupies rows/cols 4..12
        assert_eq!(s.true_mask.data()[4 * 16 + 4], 1.0);
        assert_eq!(s.true_mask.data()[3 * 16 + 4], 0.0);
        assert_eq!(s.true_mask.data()[11 * 16 + 11], 1.0);
        assert_eq!(s.true_mask.data()[12 * 16 + 11], 0.0);
    }

    #[test]
    fn oversized_block_is_rejected() {
        let (_, clean) = clean16();
        assert!(corrupt(&clean, None, &CorruptionSpec::central_block(17, 1.0, 0)).is_err());
    }

    #[test]
    fn random_missing_count() {
        let (_, clean) = clean16();
        let spec = CorruptionSpec {
            mechanism: Mechanism::RandomMissing { fraction: 0.25 },
            fill: Fill::Normal { mean: -1.0 },
            seed: 4,
        };
        let s = corrupt(&clean, None, &spec).unwrap();
        assert_eq!(s.budget, 64);
        s.check().unwrap();
        assert_eq!(corrupt(&clean, None, &spec).unwrap(), s);
    }

    #[test]
    fn every_mechanism_touches_only_the_mask() {
        let (_, clean) = clean16();
        let mechs = [
            Mechanism::CentralBlock {
                height: 6,
                width: 4,
            },
            Mechanism::RandomMissing { fraction: 0.3 },
            Mechanism::Irregular { fraction: 0.2 },
            Mechanism::DefectFill { fraction: 0.1 },
        ];
        for fill in [
            Fill::Normal { mean: 0.5 },
            Fill::UniformUnit,
            Fill::MaskedMean,
        ] {
            for seed in 0..5 {
                for mech in &mechs {
                    let s = corrupt(
                        &clean,
                        None,
                        &CorruptionSpec {
                            mechanism: mech.clone(),
                            fill,
                            seed,
                        },
                    )
                    .unwrap();
                    s.check().unwrap();
                }
            }
        }
    }

    #[test]
    fn irregular_mask_reaches_target_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in [0.05, 0.2, 0.5, 0.9] {
            let m = irregular_mask(16, 16, f, &mut rng);
            assert_eq!(m.count_nonzero(0.0), (f * 256.0).round() as usize);
        }
    }

    #[test]
    fn fill_mean_matches_level() {
        let (_, clean) = clean16();
        let mut vals = Vec::new();
        for seed in 0..10 {
            let s = corrupt(&clean, None, &CorruptionSpec::central_block(8, 0.5, seed)).unwrap();
            vals.extend(
                s.image
                    .data()
                    .iter()
                    .zip(s.true_mask.data())
                    .filter(|(_, &m)| m == 1.0)
                    .map(|(&x, _)| x),
            );
        }
        let n = vals.len() as f64;
        assert!(n >= 500.0);
        let mean = vals.iter().sum::<f64>() / n;
        assert!((mean - 0.5).abs() < 3.0 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn defect_on_constant_image_is_identity() {
        let clean = Tensor::full(&[4, 4], 0.3).unwrap();
        let mut mask = Tensor::zeros(&[4, 4]).unwrap();
        mask.data_mut()[5] = 1.0;
        mask.data_mut()[6] = 1.0;
        let s = synthesize_defect(&clean, &mask).unwrap();
        assert_eq!(s.image, clean);
    }

    #[test]
    fn defect_fill_is_masked_mean() {
        // row gradient 0, 0.2, 0.4, ... ; mask covers the 0.2 and 0.4 pixels
        let clean =
            Tensor::new(vec![2, 6], (0..12).map(|i| (i % 6) as f64 * 0.2).collect()).unwrap();
        let mut mask = Tensor::zeros(&[2, 6]).unwrap();
        mask.data_mut()[1] = 1.0;
        mask.data_mut()[2] = 1.0;
        let s = synthesize_defect(&clean, &mask).unwrap();
        assert!((s.image.data()[1] - 0.3).abs() < 1e-15);
        assert!((s.image.data()[2] - 0.3).abs() < 1e-15);
        assert_eq!(s.image.data()[0], clean.data()[0]);
        assert_eq!(s.image.data()[3], clean.data()[3]);
    }

    #[test]
    fn defect_per_channel_mean() {
        let clean = Tensor::new(
            vec![2, 2, 3],
            (0..12).map(|i| i as f64 * 0.1 - 0.5).collect(),
        )
        .unwrap();
        let mask = Tensor::new(vec![2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let s = synthesize_defect(&clean, &mask).unwrap();
        for k in 0..3 {
            let expect = (clean.data()[k] + clean.data()[3 + k]) / 2.0;
            assert!((s.image.data()[k] - expect).abs() < 1e-15);
            assert!((s.image.data()[3 + k] - expect).abs() < 1e-15);
        }
        assert_eq!(s.budget, 6);
    }

    #[test]
    fn empty_defect_mask_rejected() {
        let clean = Tensor::zeros(&[4, 4]).unwrap();
        assert!(synthesize_defect(&clean, &Tensor::zeros(&[4, 4]).unwrap()).is_err());
    }

    #[test]
    fn disjoint_defects_commute() {
        let (_, clean) = clean16();
        let mut a = Tensor::zeros(&[16, 16]).unwrap();
        let mut b = Tensor::zeros(&[16, 16]).unwrap();
        for i in 0..10 {
            a.data_mut()[i] = 1.0;
            b.data_mut()[100 + 3 * i] = 1.0;
        }
        let ab = synthesize_defect(&synthesize_defect(&clean, &a).unwrap().image, &b)
            .unwrap()
            .image;
        let ba = synthesize_defect(&synthesize_defect(&clean, &b).unwrap().image, &a)
            .unwrap()
            .image;
        assert_eq!(ab, ba);
    }

    fn write_pgm(
        dir: &Path,
        name: &str,
        w: usize,
        h: usize,
        px: impl Fn(usize, usize) -> u8,
    ) -> std::path::PathBuf {
        let pixels = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| px(r, c))
            .collect();
        let p = dir.join(name);
        std::fs::write(
            &p,
            pnm::encode(&pnm::Raster {
                width: w,
                height: h,
                channels: 1,
                pixels,
            }),
        )
        .unwrap();
        p
    }

    #[test]
    fn pgm_masks() {
        let dir = tempfile::tempdir().unwrap();
        let white = write_pgm(dir.path(), "a.pgm", 16, 16, |_, _| 255);
        let black = write_pgm(dir.path(), "b.pgm", 16, 16, |_, _| 0);
        let check = write_pgm(dir.path(), "c.pgm", 16, 16, |r, c| {
            if (r + c) % 2 == 0 {
                255
            } else {
                0
            }
        });
        assert_eq!(
            load_irregular_masks(&white, 16, 16).unwrap()[0].count_nonzero(0.0),
            256
        );
        assert_eq!(
            load_irregular_masks(&black, 16, 16).unwrap()[0].count_nonzero(0.0),
            0
        );
        assert_eq!(
            load_irregular_masks(&check, 16, 16).unwrap()[0].count_nonzero(0.0),
            128
        );
        let all = load_irregular_masks(dir.path(), 16, 16).unwrap();
        assert_eq!(all.len(), 3);
        // threshold at 128 and center crop of a larger file
        let big = write_pgm(dir.path(), "d.pgm", 32, 32, |r, c| {
            if (8..24).contains(&r) && c < 16 {
                128
            } else {
                127
            }
        });
        let m = &load_irregular_masks(&big, 16, 16).unwrap()[0];
        assert_eq!(m.count_nonzero(0.0), 16 * 8);
        // small mask is upscaled to cover
        let small = write_pgm(
            dir.path(),
            "e.pgm",
            8,
            8,
            |_, c| if c < 4 { 255 } else { 0 },
        );
        assert_eq!(
            load_irregular_masks(&small, 16, 16).unwrap()[0].count_nonzero(0.0),
            128
        );
        std::fs::write(dir.path().join("bad.pgm"), b"P5\n4 4\n255\n").unwrap();
        assert!(load_irregular_masks(dir.path().join("bad.pgm"), 16, 16).is_err());
    }
}
