//! The moment map m(C) = (m₁, m₂) of the GL(q)×GL(p) action and derived diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::tensor::{infinitesimal_act, StructureTensor};

/// Residual below which a point is declared distinguished.
pub const DEFAULT_DISTINGUISHED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentImage {
    /// m₁ = −2ΣCᵢ² = 2ΣCᵢCᵢᵀ.
    pub m1: Mat,
    /// m₂ = Gram matrix [⟨Cᵢ, Cⱼ⟩].
    pub m2: Mat,
}

impl MomentImage {
    pub fn norm_sq(&self) -> f64 {
        linalg::frob_norm_sq(&self.m1) + linalg::frob_norm_sq(&self.m2)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// m(C)·C, the infinitesimal action of (m₁, m₂) on `c`.
    pub fn act(&self, c: &StructureTensor) -> StructureTensor {
        infinitesimal_act(&self.m1, &self.m2, c).expect("moment image matches its tensor")
    }

    /// Largest entrywise difference relative to the larger of the two norms.
    pub fn relative_diff(&self, other: &Self) -> f64 {
        let d = linalg::max_abs(&(&self.m1 - &other.m1)).max(linalg::max_abs(&(&self.m2 - &other.m2)));
        let scale = linalg::max_abs(&self.m1)
            .max(linalg::max_abs(&self.m2))
            .max(linalg::max_abs(&other.m1))
            .max(linalg::max_abs(&other.m2));
        if scale == 0.0 {
            d
        } else {
            d / scale
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MomentImageRepr {
    m1: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
}

impl Serialize for MomentImage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MomentImageRepr {
            m1: linalg::rows_of(&self.m1),
            m2: linalg::rows_of(&self.m2),
        }
        .serialize(s)
    }
}

/// Closed form: m₁ = 2ΣCᵢCᵢᵀ, m₂ᵢⱼ = tr(CᵢCⱼᵀ).
pub fn moment(c: &StructureTensor) -> MomentImage {
    let (p, q) = (c.p(), c.q());
    let mut m1 = Mat::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let mut s = 0.0;
            for ck in c.mats() {
                for l in 0..q {
                    s += ck[(a, l)] * ck[(b, l)];
                }
            }
            m1[(a, b)] = 2.0 * s;
            m1[(b, a)] = 2.0 * s;
        }
    }
    let mut m2 = Mat::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let s = linalg::frob_inner(c.mat(i), c.mat(j));
            m2[(i, j)] = s;
            m2[(j, i)] = s;
        }
    }
    MomentImage { m1, m2 }
}

/// Recovers m(C) from its defining identity ⟨⟨m(C), X⟩⟩ = ⟨X·C, C⟩, evaluating the
/// right side on a basis of Sym(q)×Sym(p). Shares no formula with [`moment`].
pub fn moment_oracle(c: &StructureTensor) -> MomentImage {
    let (p, q) = (c.p(), c.q());
    let pair = |x: &Mat, y: &Mat| -> f64 { infinitesimal_act(x, y, c).expect("shapes agree").inner(c) };
    let zq = Mat::zeros(q, q);
    let zp = Mat::zeros(p, p);
    let mut m1 = Mat::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let mut e = Mat::zeros(q, q);
            e[(a, b)] = 1.0;
            e[(b, a)] = 1.0;
            // ⟨⟨m, E_ab⟩⟩ = 2 m_ab off the diagonal, m_aa on it.
            let v = pair(&e, &zp);
            let val = if a == b { v } else { v / 2.0 };
            m1[(a, b)] = val;
            m1[(b, a)] = val;
        }
    }
    let mut m2 = Mat::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut f = Mat::zeros(p, p);
            f[(i, j)] = 1.0;
            f[(j, i)] = 1.0;
            let v = pair(&zq, &f);
            let val = if i == j { v } else { v / 2.0 };
            m2[(i, j)] = val;
            m2[(j, i)] = val;
        }
    }
    MomentImage { m1, m2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinguishedReport {
    /// Optimal eigenvalue ⟨m(C)·C, C⟩/⟨C, C⟩.
    pub r: f64,
    /// ‖m(C)·C − rC‖ / (‖C‖·‖m(C)‖).
    pub residual: f64,
    pub sl_p_defect: f64,
    pub sl_q_defect: f64,
    pub full_min_defect: f64,
}

impl DistinguishedReport {
    pub fn is_distinguished(&self, tol: f64) -> bool {
        self.residual < tol
    }
}

/// Which part of GL(q)×GL(p) a minimality defect refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subgroup {
    SLp,
    SLq,
    SLboth,
    Full,
}

/// ‖M − (tr M/n) Id‖ / ‖M‖, zero for M = 0.
fn traceless_ratio(m: &Mat) -> f64 {
    let n = m.nrows();
    let norm = linalg::frob_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    let t = m.trace() / n as f64;
    let dev = m - Mat::identity(n, n) * t;
    linalg::frob_norm(&dev) / norm
}

pub fn distinguished_report(c: &StructureTensor) -> Result<DistinguishedReport> {
    let n2 = c.norm_sq();
    if n2 == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let m = moment(c);
    let w = m.act(c);
    let r = w.inner(c) / n2;
    let resid = w.axpy(-r, c).norm();
    Ok(DistinguishedReport {
        r,
        residual: resid / (n2.sqrt() * m.norm()),
        sl_p_defect: traceless_ratio(&m.m2),
        sl_q_defect: traceless_ratio(&m.m1),
        full_min_defect: (linalg::frob_norm(&m.m1) + linalg::frob_norm(&m.m2)) / n2,
    })
}

pub fn minimality_defect(c: &StructureTensor, subgroup: Subgroup) -> Result<f64> {
    let n2 = c.norm_sq();
    if n2 == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let m = moment(c);
    Ok(match subgroup {
        Subgroup::SLp => traceless_ratio(&m.m2),
        Subgroup::SLq => traceless_ratio(&m.m1),
        Subgroup::SLboth => traceless_ratio(&m.m2) + traceless_ratio(&m.m1),
        Subgroup::Full => (linalg::frob_norm(&m.m1) + linalg::frob_norm(&m.m2)) / n2,
    })
}
