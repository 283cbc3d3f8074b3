use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Layer activations for `n` samples, each with `s` positions of `c` channels,
/// stored sample-major then position-major. Labels are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSet {
    n: usize,
    s: usize,
    c: usize,
    data: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl ActivationSet {
    pub fn new(
        n: usize,
        s: usize,
        c: usize,
        data: Vec<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n == 0 || s == 0 || c == 0 {
            return Err(Error::Shape(format!(
                "activation dims must be positive, got ({n}, {s}, {c})"
            )));
        }
        if data.len() != n * s * c {
            return Err(Error::Shape(format!(
                "payload length {} != n·s·c = {}",
                data.len(),
                n * s * c
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(Self {
            n,
            s,
            c,
            data,
            labels,
        })
    }

    /// One position per sample; the matrix rows are the samples.
    pub fn from_matrix(m: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, c) = m.shape();
        Self::new(n, 1, c, m.into_vec(), labels)
    }

    /// Reinterpret an `(n·s) x c` matrix as `n` samples of `s` positions.
    pub fn from_position_rows(m: Matrix, s: usize, labels: Option<Vec<usize>>) -> Result<Self> {
        let (rows, c) = m.shape();
        if s == 0 || rows % s != 0 {
            return Err(Error::Shape(format!(
                "{rows} rows do not split into positions of {s}"
            )));
        }
        Self::new(rows / s, s, c, m.into_vec(), labels)
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn positions(&self) -> usize {
        self.s
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.s, self.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn at(&self, sample: usize, position: usize, channel: usize) -> f64 {
        self.data[(sample * self.s + position) * self.c + channel]
    }

    /// `n x (s·c)`: each sample flattened into one row.
    pub fn flattened(&self) -> Matrix {
        Matrix::from_vec(self.n, self.s * self.c, self.data.clone())
            .expect("dims checked at construction")
    }

    /// `(n·s) x c`: every position of every sample is a row.
    pub fn position_rows(&self) -> Matrix {
        Matrix::from_vec(self.n * self.s, self.c, self.data.clone())
            .expect("dims checked at construction")
    }

    /// `n x c`: mean over positions.
    pub fn pooled(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.c);
        let inv = 1.0 / self.s as f64;
        for i in 0..self.n {
            let row = out.row_mut(i);
            for p in 0..self.s {
                let base = (i * self.s + p) * self.c;
                for (o, v) in row.iter_mut().zip(&self.data[base..base + self.c]) {
                    *o += v;
                }
            }
            row.iter_mut().for_each(|o| *o *= inv);
        }
        out
    }

    /// Samples selected by index, labels carried along.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let stride = self.s * self.c;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            if i >= self.n {
                return Err(Error::Argument(format!(
                    "sample {i} out of range {}",
                    self.n
                )));
            }
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Self::new(idx.len(), self.s, self.c, data, labels)
    }

    /// Add `shift` to every position's channel vector.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.c {
            return Err(Error::Shape(format!(
                "shift of width {} for {} channels",
                shift.len(),
                self.c
            )));
        }
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(self.c) {
            chunk.iter_mut().zip(shift).for_each(|(v, d)| *v += d);
        }
        Ok(out)
    }
}
