//! Structure tensors C = (C¹,…,Cᵖ) in so(q)ᵖ and the GL(q)×GL(p) action.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Default relative rank tolerance for [`StructureTensor::is_type_pq`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// A p-tuple of skew-symmetric q×q matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    q: usize,
    mats: Vec<Mat>,
    correction: f64,
    labels: Option<serde_json::Value>,
}

/// dim so(q) = q(q−1)/2.
pub fn dim_so(q: usize) -> usize {
    q * q.saturating_sub(1) / 2
}

impl StructureTensor {
    /// Builds a tensor from arbitrary square matrices, keeping only the skew part.
    /// The largest entrywise change is recorded in [`correction`](Self::correction).
    pub fn new(p: usize, q: usize, entries: Vec<Mat>) -> Result<Self> {
        if p < 1 || q < 2 {
            return Err(Error::InvalidType {
                p,
                q,
                reason: "need p >= 1 and q >= 2".into(),
            });
        }
        if entries.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "expected {p} matrices, got {}",
                entries.len()
            )));
        }
        let mut correction = 0.0_f64;
        let mut mats = Vec::with_capacity(p);
        for (k, m) in entries.into_iter().enumerate() {
            if m.shape() != (q, q) {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {k} is {}x{}, expected {q}x{q}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for i in 0..q {
                for j in 0..q {
                    if !m[(i, j)].is_finite() {
                        return Err(Error::NonFinite { matrix: k, row: i, col: j });
                    }
                }
            }
            let s = linalg::skew_part(&m);
            correction = correction.max(linalg::max_abs(&(&m - &s)));
            mats.push(s);
        }
        Ok(Self {
            q,
            mats,
            correction,
            labels: None,
        })
    }

    /// Builds from row-major flat data, one slice of length q² per matrix.
    pub fn from_row_major(p: usize, q: usize, data: &[Vec<f64>]) -> Result<Self> {
        if data.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "expected {p} matrices, got {}",
                data.len()
            )));
        }
        let mut mats = Vec::with_capacity(p);
        for (k, d) in data.iter().enumerate() {
            if d.len() != q * q {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {k} has {} entries, expected {}",
                    d.len(),
                    q * q
                )));
            }
            mats.push(linalg::from_row_major(q, q, d));
        }
        Self::new(p, q, mats)
    }

    /// Internal constructor for matrices already known to be exactly skew.
    pub(crate) fn from_skew(q: usize, mats: Vec<Mat>) -> Self {
        debug_assert!(!mats.is_empty());
        debug_assert!(mats.iter().all(|m| m.shape() == (q, q)));
        debug_assert!(mats.iter().all(|m| m == &(-m.transpose())));
        Self {
            q,
            mats,
            correction: 0.0,
            labels: None,
        }
    }

    /// Like `from_skew` but projects, for results of floating-point products.
    pub(crate) fn from_projected(q: usize, mats: Vec<Mat>) -> Self {
        let mats = mats.iter().map(linalg::skew_part).collect();
        Self::from_skew(q, mats)
    }

    pub fn zeros(p: usize, q: usize) -> Result<Self> {
        Self::new(p, q, vec![Mat::zeros(q, q); p])
    }

    pub fn p(&self) -> usize {
        self.mats.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// D_q = q(q−1)/2.
    pub fn dim_so(&self) -> usize {
        dim_so(self.q)
    }

    pub fn mats(&self) -> &[Mat] {
        &self.mats
    }

    pub fn mat(&self, k: usize) -> &Mat {
        &self.mats[k]
    }

    /// Largest entry change made by the skew projection at construction.
    pub fn correction(&self) -> f64 {
        self.correction
    }

    pub fn labels(&self) -> Option<&serde_json::Value> {
        self.labels.as_ref()
    }

    pub fn with_labels(mut self, labels: Option<serde_json::Value>) -> Self {
        self.labels = labels;
        self
    }

    /// Σₖ ⟨Aᵏ, Bᵏ⟩ with the trace pairing.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.p(), other.p());
        assert_eq!(self.q, other.q);
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| linalg::frob_inner(a, b))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.mats.iter().all(|m| m.iter().all(|&x| x == 0.0))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.mats {
            *m *= s;
        }
        out
    }

    /// Scales slot `k` only.
    pub fn scaled_slot(&self, k: usize, s: f64) -> Self {
        let mut out = self.clone();
        out.mats[k] *= s;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    /// self + a·other.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert_eq!(self.p(), other.p());
        assert_eq!(self.q, other.q);
        let mats = self
            .mats
            .iter()
            .zip(&other.mats)
            .map(|(x, y)| x + y * a)
            .collect();
        Self {
            q: self.q,
            mats,
            correction: 0.0,
            labels: None,
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroTensor);
        }
        Ok(self.scaled(1.0 / n))
    }

    /// Largest absolute entry difference to another tensor of the same type.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.p() != other.p() || self.q != other.q {
            return None;
        }
        Some(
            self.mats
                .iter()
                .zip(&other.mats)
                .map(|(a, b)| linalg::max_abs(&(a - b)))
                .fold(0.0, f64::max),
        )
    }

    /// The p×D_q matrix of strictly-upper-triangular coordinates, scaled by √2
    /// so that row inner products equal the trace pairing.
    pub fn coefficient_matrix(&self) -> Mat {
        let d = self.dim_so();
        let mut out = Mat::zeros(self.p(), d);
        let r2 = std::f64::consts::SQRT_2;
        for (k, m) in self.mats.iter().enumerate() {
            let mut c = 0;
            for i in 0..self.q {
                for j in (i + 1)..self.q {
                    out[(k, c)] = r2 * m[(i, j)];
                    c += 1;
                }
            }
        }
        out
    }

    /// Linear independence of the components: smallest singular value of the
    /// coefficient matrix exceeds `tol` times the largest.
    pub fn is_type_pq(&self, tol: f64) -> bool {
        if self.p() > self.dim_so() {
            return false;
        }
        let s = linalg::singular_values(&self.coefficient_matrix());
        match (s.first(), s.last()) {
            (Some(&hi), Some(&lo)) => hi > 0.0 && s.len() == self.p() && lo > tol * hi,
            _ => false,
        }
    }

    /// Row-major flattening of every component.
    pub fn to_row_major(&self) -> Vec<Vec<f64>> {
        self.mats.iter().map(linalg::flatten_row_major).collect()
    }

    /// Standard-normal upper-triangular entries, mirrored to skew.
    pub fn random<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Result<Self> {
        if p < 1 || q < 2 {
            return Err(Error::InvalidType {
                p,
                q,
                reason: "need p >= 1 and q >= 2".into(),
            });
        }
        let mats = (0..p)
            .map(|_| {
                let mut m = Mat::zeros(q, q);
                for i in 0..q {
                    for j in (i + 1)..q {
                        let x: f64 = rng.sample(StandardNormal);
                        m[(i, j)] = x;
                        m[(j, i)] = -x;
                    }
                }
                m
            })
            .collect();
        Ok(Self::from_skew(q, mats))
    }
}

/// An element (g, h) of GL(q)×GL(p).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub g: Mat,
    pub h: Mat,
}

impl GroupElement {
    pub fn new(g: Mat, h: Mat) -> Result<Self> {
        for (name, m) in [("g", &g), ("h", &h)] {
            if !m.is_square() || m.nrows() == 0 {
                return Err(Error::DimensionMismatch(format!("{name} must be square and nonempty")));
            }
            let det = m.determinant();
            if !det.is_finite() || det == 0.0 {
                return Err(Error::Singular(format!("det {name} = {det}")));
            }
        }
        Ok(Self { g, h })
    }

    pub fn identity(p: usize, q: usize) -> Self {
        Self {
            g: Mat::identity(q, q),
            h: Mat::identity(p, p),
        }
    }

    /// Group product (g₁g₂, h₁h₂).
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            g: &self.g * &other.g,
            h: &self.h * &other.h,
        }
    }
}

/// (g,h)·C with C′ᵏ = Σⱼ h_kj g Cʲ gᵀ.
pub fn group_act(e: &GroupElement, c: &StructureTensor) -> Result<StructureTensor> {
    let (p, q) = (c.p(), c.q());
    if e.g.shape() != (q, q) || e.h.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "group element ({}x{}, {}x{}) vs tensor type ({p}, {q})",
            e.g.nrows(),
            e.g.ncols(),
            e.h.nrows(),
            e.h.ncols()
        )));
    }
    let conj: Vec<Mat> = c.mats().iter().map(|m| &e.g * m * e.g.transpose()).collect();
    let mats = (0..p)
        .map(|k| {
            let mut acc = Mat::zeros(q, q);
            for (j, cj) in conj.iter().enumerate() {
                let h = e.h[(k, j)];
                if h != 0.0 {
                    acc += cj * h;
                }
            }
            acc
        })
        .collect();
    Ok(StructureTensor::from_projected(q, mats))
}

/// (X,Y)·C with k-th matrix X Cᵏ + Cᵏ Xᵀ + Σⱼ Y_kj Cʲ.
pub fn infinitesimal_act(x: &Mat, y: &Mat, c: &StructureTensor) -> Result<StructureTensor> {
    let (p, q) = (c.p(), c.q());
    if x.shape() != (q, q) || y.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "generators ({}x{}, {}x{}) vs tensor type ({p}, {q})",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let mats = (0..p)
        .map(|k| {
            let ck = c.mat(k);
            let mut acc = x * ck + ck * x.transpose();
            for (j, cj) in c.mats().iter().enumerate() {
                let h = y[(k, j)];
                if h != 0.0 {
                    acc += cj * h;
                }
            }
            acc
        })
        .collect();
    Ok(StructureTensor::from_projected(q, mats))
}

/// Convenience constructor for a q×q matrix from row-major data.
pub fn mat(q: usize, data: &[f64]) -> Mat {
    DMatrix::from_row_slice(q, q, data)
}
