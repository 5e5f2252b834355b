//! Dense row-major `f64` tensors and the RGT1 raw tensor file format.
//!
//! RGT1 layout (all integers little-endian):
//!
//! | bytes      | content                         |
//! |------------|---------------------------------|
//! | 4          | magic `RGT1`                    |
//! | 1          | dtype code, `0x01` = f64 LE     |
//! | 1          | rank `r`                        |
//! | 8·r        | dims as `u64`                   |
//! | 8·∏dims    | row-major payload               |

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const RGT1_MAGIC: &[u8; 4] = b"RGT1";
pub const DTYPE_F64: u8 = 0x01;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape {
                shape,
                reason: "dimensions must be positive".into(),
            });
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {n} values, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    /// 1-D tensor over `data`.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![v; n])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    /// Standard normal entries drawn from `rng`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Self> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        self.check_same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul_elementwise", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Accumulates `other` into `self` in place.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "accumulate")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Matrix dimensions of a rank-1 (treated as column) or rank-2 tensor.
    fn as_matrix(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Some((*n, 1)),
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    /// Matrix product. Rank-1 operands are treated as column vectors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            left: self.shape.clone(),
            right: other.shape.clone(),
        };
        let (m, k) = self.as_matrix().ok_or_else(mismatch)?;
        let (k2, n) = other.as_matrix().ok_or_else(mismatch)?;
        if k != k2 {
            return Err(mismatch());
        }
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.data[i * k..(i + 1) * k]
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| a * b)
                    .sum();
            }
            return Self::new(vec![m, 1], out);
        }
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[p * n..(p + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Self::new(vec![m, n], out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        let mismatch = || Error::ShapeMismatch {
            op: "t_matmul",
            left: self.shape.clone(),
            right: other.shape.clone(),
        };
        let (m, k) = self.as_matrix().ok_or_else(mismatch)?;
        let (m2, n) = other.as_matrix().ok_or_else(mismatch)?;
        if m != m2 {
            return Err(mismatch());
        }
        let mut out = vec![0.0; k * n];
        if n == 1 {
            for (i, &c) in other.data.iter().enumerate() {
                for (o, &a) in out.iter_mut().zip(&self.data[i * k..(i + 1) * k]) {
                    *o += a * c;
                }
            }
            return Self::new(vec![k, 1], out);
        }
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            let src = &other.data[i * n..(i + 1) * n];
            for (p, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in out[p * n..(p + 1) * n].iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Self::new(vec![k, n], out)
    }

    /// Transpose of a rank-1 (column) or rank-2 tensor; always rank-2.
    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.as_matrix().ok_or_else(|| Error::InvalidShape {
            shape: self.shape.clone(),
            reason: "transpose needs rank 1 or 2".into(),
        })?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// ∞-norm distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Number of entries with magnitude above `tol`.
    pub fn count_nonzero(&self, tol: f64) -> usize {
        self.data.iter().filter(|v| v.abs() > tol).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn to_rgt1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 8 * self.shape.len() + 8 * self.data.len());
        out.extend_from_slice(RGT1_MAGIC);
        out.push(DTYPE_F64);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_rgt1<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.to_rgt1_bytes())?;
        Ok(())
    }

    pub fn read_rgt1<R: Read>(r: &mut R) -> Result<Self> {
        let mut head = [0u8; 6];
        read_exact(r, &mut head, "RGT1 header")?;
        if &head[..4] != RGT1_MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &head[..4])));
        }
        if head[4] != DTYPE_F64 {
            return Err(Error::Format(format!(
                "unsupported dtype code {:#04x}",
                head[4]
            )));
        }
        let rank = head[5] as usize;
        if rank == 0 {
            return Err(Error::Format("rank 0 tensor".into()));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(r, &mut b, "RGT1 dims")?;
            let d = u64::from_le_bytes(b);
            shape
                .push(usize::try_from(d).map_err(|_| Error::Format(format!("dim {d} too large")))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0 && n < (1 << 32))
            .ok_or_else(|| Error::Format(format!("implausible shape {shape:?}")))?;
        let mut payload = vec![0u8; n * 8];
        read_exact(r, &mut payload, "RGT1 payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(shape, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_rgt1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let t = Self::read_rgt1(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_rgt1_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_rgt1_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}
