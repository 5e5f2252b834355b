//! Restoration and segmentation metrics.
//!
//! Pixel values are assumed to lie in `[-1, 1]`, so PSNR and SSIM default
//! to a dynamic range of 2.

use crate::corruption::spatial_dims;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PSNR_CAP: f64 = 99.0;
pub const DEFAULT_PEAK: f64 = 2.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// `sqrt( mean_i ‖a_i − b_i‖² / P_i )`.
pub fn rmse(restored: &[Tensor], truth: &[Tensor]) -> Result<f64> {
    if restored.len() != truth.len() || restored.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "rmse needs equal non-empty lists, got {} and {}",
            restored.len(),
            truth.len()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in restored.iter().zip(truth) {
        acc += a.sub(b)?.sum_squares() / a.len() as f64;
    }
    Ok((acc / restored.len() as f64).sqrt())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(a.sub(b)?.sum_squares() / a.len() as f64)
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse < 1e-12 {
        PSNR_CAP
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// PSNR over entries where `region` is 1.
pub fn psnr_region(a: &Tensor, b: &Tensor, region: &Tensor, peak: f64) -> Result<f64> {
    a.check_same_shape(b, "psnr_region")?;
    a.check_same_shape(region, "psnr_region")?;
    let (mut acc, mut n) = (0.0, 0usize);
    for ((x, y), &m) in a.data().iter().zip(b.data()).zip(region.data()) {
        if m == 1.0 {
            acc += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "psnr_region over an empty region".into(),
        ));
    }
    Ok(psnr_from_mse(acc / n as f64, peak))
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" Gaussian filtering of an `h × w` plane.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..n).map(|t| k[t] * img[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|t| k[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let e_aa = filter_valid(&aa, h, w, &k);
    let e_bb = filter_valid(&bb, h, w, &k);
    let e_ab = filter_valid(&ab, h, w, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM with an 11×11 Gaussian window (σ 1.5), K1 0.01, K2 0.03,
/// dynamic range 2. Multi-channel images average the per-channel score.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (h, w, ch) = spatial_dims(a.shape())?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} smaller than {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let plane = |t: &Tensor, c: usize| -> Vec<f64> {
        t.data().iter().skip(c).step_by(ch).copied().collect()
    };
    let total: f64 = (0..ch)
        .map(|c| ssim_plane(&plane(a, c), &plane(b, c), h, w, DEFAULT_PEAK))
        .sum();
    Ok(total / ch as f64)
}

fn check_binary(m: &Tensor, what: &str) -> Result<()> {
    if m.is_binary() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} is not binary")))
    }
}

/// `2|P∩T| / (|P| + |T|)`; 1 when both masks are empty.
pub fn dice(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    pred.check_same_shape(truth, "dice")?;
    check_binary(pred, "predicted mask")?;
    check_binary(truth, "true mask")?;
    let (mut inter, mut np, mut nt) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let (p, t) = (p == 1.0, t == 1.0);
        inter += (p && t) as usize;
        np += p as usize;
        nt += t as usize;
    }
    if np + nt == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + nt) as f64)
}

fn class_counts(truth: &Tensor) -> Result<(usize, usize)> {
    check_binary(truth, "true mask")?;
    let pos = truth.count_nonzero(0.0);
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "AUROC needs both positive and negative pixels".into(),
        ));
    }
    Ok((pos, neg))
}

/// Rank-based (Mann–Whitney) AUROC with midranks for ties.
pub fn pixel_auroc(scores: &Tensor, truth: &Tensor) -> Result<f64> {
    scores.check_same_shape(truth, "pixel_auroc")?;
    let (pos, neg) = class_counts(truth)?;
    let s = scores.data();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && s[order[j + 1]] == s[order[i]] {
            j += 1;
        }
        // ranks are 1-based: i+1 ..= j+1
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j]
            .iter()
            .filter(|&&k| truth.data()[k] == 1.0)
            .count();
        rank_sum_pos += midrank * positives as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Best Dice over predictions `score >= t` for every observed score `t`.
/// Returns `(t, dice)`; ties keep the larger threshold.
pub fn best_threshold_dice(scores: &Tensor, truth: &Tensor) -> Result<(f64, f64)> {
    scores.check_same_shape(truth, "best_threshold_dice")?;
    let (pos, _) = class_counts(truth)?;
    let s = scores.data();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let (mut tp, mut predicted) = (0usize, 0usize);
    let mut best = (f64::NAN, -1.0);
    let mut i = 0;
    while i < order.len() {
        let t = s[order[i]];
        while i < order.len() && s[order[i]] == t {
            tp += (truth.data()[order[i]] == 1.0) as usize;
            predicted += 1;
            i += 1;
        }
        let d = 2.0 * tp as f64 / (predicted + pos) as f64;
        if d > best.1 {
            best = (t, d);
        }
    }
    Ok(best)
}

/// Per-sample metric rows with mean / population-std aggregates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub metrics: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl MetricReport {
    pub fn new(metrics: &[&str]) -> Self {
        Self {
            metrics: metrics.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.metrics.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} metrics",
                values.len(),
                self.metrics.len()
            )));
        }
        self.rows.push((sample.into(), values));
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.metrics.len())
            .map(|k| self.rows.iter().map(|r| r.1[k]).sum::<f64>() / n)
            .collect()
    }

    pub fn std(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        self.mean()
            .iter()
            .enumerate()
            .map(|(k, m)| (self.rows.iter().map(|r| (r.1[k] - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect()
    }

    /// `sample,<metric>...` rows followed by `aggregate__mean` and `aggregate__std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample");
        for m in &self.metrics {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        let mut row = |label: &str, vals: &[f64]| {
            out.push_str(label);
            for v in vals {
                out.push(',');
                out.push_str(&format_sig9(*v));
            }
            out.push('\n');
        };
        for (label, vals) in &self.rows {
            row(label, vals);
        }
        if !self.rows.is_empty() {
            row("aggregate__mean", &self.mean());
            row("aggregate__std", &self.std());
        }
        out
    }
}

/// Fixed 9-significant-digit float formatting for emitted CSVs.
pub fn format_sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}
