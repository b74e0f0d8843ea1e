//! Concatenation, adjoin, the explicit block matrices, and the named families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::moment::moment;
use crate::tensor::{dim_so, infinitesimal_act, mat, StructureTensor};

/// Residual tolerance used by [`rescale_match`] to accept the eigen-condition.
pub const RESCALE_TOL: f64 = 1e-9;

pub fn j_matrix() -> Mat {
    mat(2, &[0.0, 1.0, -1.0, 0.0])
}

/// K = [[0,1],[1,0]]. Symmetric, so it is not itself a structure matrix; it only
/// enters through the off-diagonal blocks of B₂.
pub fn k_matrix() -> Mat {
    mat(2, &[0.0, 1.0, 1.0, 0.0])
}

#[rustfmt::skip]
const B: [[f64; 16]; 6] = [
    [ 0.,  1.,  0.,  0.,  -1.,  0.,  0.,  0.,   0.,  0.,  0.,  1.,   0.,  0., -1.,  0.],
    [ 0.,  0.,  0.,  1.,   0.,  0.,  1.,  0.,   0., -1.,  0.,  0.,  -1.,  0.,  0.,  0.],
    [ 0.,  0.,  1.,  0.,   0.,  0.,  0.,  1.,  -1.,  0.,  0.,  0.,   0., -1.,  0.,  0.],
    [ 0.,  1.,  0.,  0.,  -1.,  0.,  0.,  0.,   0.,  0.,  0., -1.,   0.,  0.,  1.,  0.],
    [ 0.,  0.,  0.,  1.,   0.,  0., -1.,  0.,   0.,  1.,  0.,  0.,  -1.,  0.,  0.,  0.],
    [ 0.,  0.,  1.,  0.,   0.,  0.,  0., -1.,  -1.,  0.,  0.,  0.,   0.,  1.,  0.,  0.],
];

/// Bᵢ ∈ so(4) for i = 1..=6. Panics outside that range.
pub fn b_matrix(i: usize) -> Mat {
    assert!((1..=6).contains(&i), "B index {i} out of range 1..=6");
    mat(4, &B[i - 1])
}

/// Named building blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StandardBlock {
    J,
    B(u8),
    JKPair,
    Soliton23,
    HeisenbergJ(usize),
}

impl fmt::Display for StandardBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StandardBlock::J => write!(f, "J"),
            StandardBlock::B(i) => write!(f, "B{i}"),
            StandardBlock::JKPair => write!(f, "JK_pair"),
            StandardBlock::Soliton23 => write!(f, "Soliton23"),
            StandardBlock::HeisenbergJ(k) => write!(f, "HeisenbergJ({k})"),
        }
    }
}

impl FromStr for StandardBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        match lower.as_str() {
            "j" => return Ok(StandardBlock::J),
            "jk_pair" | "jk-pair" | "jkpair" => return Ok(StandardBlock::JKPair),
            "soliton23" | "soliton_23" | "soliton-23" => return Ok(StandardBlock::Soliton23),
            "k" => {
                return Err(Error::Unsupported(
                    "K is symmetric; use k_matrix() for the raw matrix".into(),
                ))
            }
            _ => {}
        }
        if let Some(rest) = lower.strip_prefix('b') {
            if let Ok(i) = rest.parse::<u8>() {
                if (1..=6).contains(&i) {
                    return Ok(StandardBlock::B(i));
                }
            }
        }
        for prefix in ["heisenbergj(", "heisenberg_j(", "heisenberg-j("] {
            if let Some(rest) = lower.strip_prefix(prefix) {
                if let Some(num) = rest.strip_suffix(')') {
                    if let Ok(k) = num.trim().parse::<usize>() {
                        return Ok(StandardBlock::HeisenbergJ(k));
                    }
                }
            }
        }
        Err(Error::UnknownBlock(t.to_string()))
    }
}

pub fn standard_blocks(name: StandardBlock) -> Result<StructureTensor> {
    match name {
        StandardBlock::J => Ok(StructureTensor::from_skew(2, vec![j_matrix()])),
        StandardBlock::B(i) if (1..=6).contains(&i) => {
            Ok(StructureTensor::from_skew(4, vec![b_matrix(i as usize)]))
        }
        StandardBlock::B(i) => Err(Error::UnknownBlock(format!("B{i}"))),
        StandardBlock::JKPair => Ok(b_tuple(2)),
        StandardBlock::Soliton23 => Ok(soliton_23()),
        StandardBlock::HeisenbergJ(k) => heisenberg_j(k),
    }
}

/// J +_c … +_c J (k copies) in so(2k)¹.
pub fn heisenberg_j(k: usize) -> Result<StructureTensor> {
    if k == 0 {
        return Err(Error::InvalidFamily("HeisenbergJ needs k >= 1".into()));
    }
    let blocks = vec![j_matrix(); k];
    Ok(StructureTensor::from_skew(2 * k, vec![block_diag(&blocks)]))
}

/// (J⊕0₁, 0₁⊕J) in so(3)².
pub fn soliton_23() -> StructureTensor {
    let a = mat(3, &[0., 1., 0., -1., 0., 0., 0., 0., 0.]);
    let b = mat(3, &[0., 0., 0., 0., 0., 1., 0., -1., 0.]);
    StructureTensor::from_skew(3, vec![a, b])
}

/// (B₁, …, B_j) in so(4)ʲ, 1 ≤ j ≤ 6.
pub fn b_tuple(j: usize) -> StructureTensor {
    assert!((1..=6).contains(&j));
    StructureTensor::from_skew(4, (1..=j).map(b_matrix).collect())
}

pub(crate) fn block_diag(blocks: &[Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let s = b.nrows();
        out.view_mut((off, off), (s, s)).copy_from(b);
        off += s;
    }
    out
}

/// A +_c B: Cᵢ = blockdiag(Aᵢ, Bᵢ). Requires equal p.
pub fn concat(a: &StructureTensor, b: &StructureTensor) -> Result<StructureTensor> {
    if a.p() != b.p() {
        return Err(Error::DimensionMismatch(format!(
            "concat needs equal p, got {} and {}",
            a.p(),
            b.p()
        )));
    }
    let mats = a
        .mats()
        .iter()
        .zip(b.mats())
        .map(|(x, y)| block_diag(&[x.clone(), y.clone()]))
        .collect();
    Ok(StructureTensor::from_skew(a.q() + b.q(), mats))
}

fn pad_to(a: &StructureTensor, p: usize) -> StructureTensor {
    let mut mats = a.mats().to_vec();
    mats.resize(p, Mat::zeros(a.q(), a.q()));
    StructureTensor::from_skew(a.q(), mats)
}

/// Pads A with zero matrices up to B.p, then concatenates.
pub fn pad_concat(a: &StructureTensor, b: &StructureTensor) -> Result<StructureTensor> {
    if a.p() > b.p() {
        return Err(Error::DimensionMismatch(format!(
            "pad_concat needs A.p <= B.p, got {} > {}",
            a.p(),
            b.p()
        )));
    }
    concat(&pad_to(a, b.p()), b)
}

/// Concatenates a list, padding every member to the largest p.
pub fn concat_all(parts: &[StructureTensor]) -> Result<StructureTensor> {
    let p = parts
        .iter()
        .map(|t| t.p())
        .max()
        .ok_or_else(|| Error::DimensionMismatch("empty concatenation".into()))?;
    let mut acc = pad_to(&parts[0], p);
    for t in &parts[1..] {
        acc = concat(&acc, &pad_to(t, p))?;
    }
    Ok(acc)
}

/// A +_a [B¹, B², …]: the last slot of A is joined block-diagonally with the first
/// slot of every Bⁱ; the remaining slots of each Bⁱ are fresh.
pub fn adjoin(a: &StructureTensor, bs: &[StructureTensor]) -> Result<StructureTensor> {
    if bs.is_empty() {
        return Err(Error::EmptyAdjoin);
    }
    let q: usize = a.q() + bs.iter().map(|b| b.q()).sum::<usize>();
    let p: usize = a.p() + bs.iter().map(|b| b.p() - 1).sum::<usize>();
    let mut mats = vec![Mat::zeros(q, q); p];
    let (qa, pa) = (a.q(), a.p());
    for (k, m) in a.mats().iter().enumerate() {
        mats[k].view_mut((0, 0), (qa, qa)).copy_from(m);
    }
    let mut off = qa;
    let mut slot = pa;
    for b in bs {
        let qb = b.q();
        mats[pa - 1].view_mut((off, off), (qb, qb)).copy_from(b.mat(0));
        for m in &b.mats()[1..] {
            mats[slot].view_mut((off, off), (qb, qb)).copy_from(m);
            slot += 1;
        }
        off += qb;
    }
    Ok(StructureTensor::from_skew(q, mats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescaleMatch {
    pub scaled: StructureTensor,
    pub s: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

/// λ with m₁(C)·C ≈ λC (the q-factor action only), checked against `tol`.
pub fn q_eigenvalue(c: &StructureTensor, tol: f64) -> Result<f64> {
    let n2 = c.norm_sq();
    if n2 == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let m1 = moment(c).m1;
    let x = infinitesimal_act(&m1, &Mat::zeros(c.p(), c.p()), c)?;
    let lambda = x.inner(c) / n2;
    let residual = x.axpy(-lambda, c).norm() / (n2.sqrt() * linalg::frob_norm(&m1));
    if !(residual < tol) {
        return Err(Error::NotEigen { residual });
    }
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveEigenvalue(lambda));
    }
    Ok(lambda)
}

/// Scales B by s = √(λ_a/λ_b) so both tensors share the same q-eigenvalue.
pub fn rescale_match(a: &StructureTensor, b: &StructureTensor) -> Result<RescaleMatch> {
    let lambda_a = q_eigenvalue(a, RESCALE_TOL)?;
    let lambda_b = q_eigenvalue(b, RESCALE_TOL)?;
    let s = (lambda_a / lambda_b).sqrt();
    Ok(RescaleMatch {
        scaled: b.scaled(s),
        s,
        lambda_a,
        lambda_b,
    })
}

/// A tuple with D₁² = −Id, pairwise orthogonal components of norm² q, and scalar
/// moment in both factors. p is D_q (all of so(q)) or D_q − 1.
pub fn build_minimal_d(q: usize, p: usize) -> Result<StructureTensor> {
    if q < 2 || !q.is_multiple_of(2) {
        return Err(Error::Unsupported(format!("minimal D needs even q >= 2, got {q}")));
    }
    let full = dim_so(q);
    if p != full && p + 1 != full {
        return Err(Error::Unsupported(format!(
            "minimal D in so({q}) needs p in {{{}, {full}}}, got {p}",
            full - 1
        )));
    }
    if p == 0 {
        return Err(Error::Unsupported("minimal D in so(2) needs p = 1".into()));
    }
    if q == 4 {
        // Exact integer basis; for p = 5 drop B₆, which also squares to −Id.
        return Ok(StructureTensor::from_skew(4, (1..=p).map(b_matrix).collect()));
    }
    let half = q / 2;
    let d1 = block_diag(&vec![j_matrix(); half]);
    if q == 2 {
        return Ok(StructureTensor::from_skew(2, vec![d1]));
    }
    let mut d2 = Mat::zeros(q, q);
    for i in 0..half {
        d2[(i, i + half)] = 1.0;
        d2[(i + half, i)] = -1.0;
    }
    // Complete {D₁, D₂} to an orthogonal basis of so(q) by Gram–Schmidt on E_ab.
    let scale = q as f64;
    let mut basis: Vec<Mat> = vec![d1, d2];
    for a in 0..q {
        for b in (a + 1)..q {
            let mut e = Mat::zeros(q, q);
            e[(a, b)] = 1.0;
            e[(b, a)] = -1.0;
            for _ in 0..2 {
                for v in &basis {
                    let c = linalg::frob_inner(&e, v) / linalg::frob_norm_sq(v);
                    e -= v * c;
                }
            }
            let n = linalg::frob_norm_sq(&e);
            if n > 1e-8 {
                e *= (scale / n).sqrt();
                basis.push(linalg::skew_part(&e));
            }
        }
    }
    debug_assert_eq!(basis.len(), full);
    if p + 1 == full {
        basis.remove(1);
    }
    Ok(StructureTensor::from_skew(q, basis))
}

/// (λD₁, μD₂, …, μD_p).
pub fn d_tilde(d: &StructureTensor, lambda: f64, mu: f64) -> StructureTensor {
    let mats = d
        .mats()
        .iter()
        .enumerate()
        .map(|(k, m)| m * if k == 0 { lambda } else { mu })
        .collect();
    StructureTensor::from_skew(d.q(), mats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    HeisenbergJ,
    Soliton23,
    BBlocks,
    NonEinstein,
    J9,
    MinimalD,
    AdjoinedNonEinstein,
}

/// Parameters naming one of the explicit families.
///
/// Field use by kind: `HeisenbergJ` reads k; `BBlocks` reads j; `NonEinstein`
/// and `AdjoinedNonEinstein` read j, k, n, t, d (the latter also `adjoin_list`);
/// `J9` reads j; `MinimalD` reads `q` and `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default)]
    pub j: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub d: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adjoin_list: Vec<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

impl FamilySpec {
    fn bare(kind: FamilyKind) -> Self {
        Self {
            kind,
            j: 0,
            k: 0,
            n: 0,
            t: Vec::new(),
            d: 0,
            adjoin_list: Vec::new(),
            q: None,
            p: None,
        }
    }

    pub fn heisenberg(k: usize) -> Self {
        Self { k, ..Self::bare(FamilyKind::HeisenbergJ) }
    }

    pub fn soliton() -> Self {
        Self::bare(FamilyKind::Soliton23)
    }

    pub fn b_blocks(j: usize) -> Self {
        Self { j, ..Self::bare(FamilyKind::BBlocks) }
    }

    /// The non-Einstein family with t = (1, …, 1).
    pub fn non_einstein(j: usize, k: usize, n: usize, d: usize) -> Self {
        Self {
            j,
            k,
            n,
            d,
            t: vec![1.0; n.saturating_sub(1)],
            ..Self::bare(FamilyKind::NonEinstein)
        }
    }

    pub fn with_t(mut self, t: Vec<f64>) -> Self {
        self.t = t;
        self
    }

    pub fn j9(j: usize) -> Self {
        Self { j, ..Self::bare(FamilyKind::J9) }
    }

    pub fn minimal_d(q: usize, p: usize) -> Self {
        Self {
            q: Some(q),
            p: Some(p),
            ..Self::bare(FamilyKind::MinimalD)
        }
    }

    pub fn adjoined(base: FamilySpec, list: Vec<FamilySpec>) -> Self {
        Self {
            kind: FamilyKind::AdjoinedNonEinstein,
            adjoin_list: list,
            ..base
        }
    }

    /// 2k ≥ 4n + d for the non-Einstein kinds; false otherwise.
    pub fn certificate_precondition(&self) -> bool {
        match self.kind {
            FamilyKind::NonEinstein | FamilyKind::AdjoinedNonEinstein => 2 * self.k >= 4 * self.n + self.d,
            _ => false,
        }
    }

    /// Checks the field invariants for this kind.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFamily(msg));
        match self.kind {
            FamilyKind::HeisenbergJ => {
                if self.k < 1 {
                    return bad("HeisenbergJ needs k >= 1".into());
                }
            }
            FamilyKind::Soliton23 => {}
            FamilyKind::BBlocks => {
                if !(1..=6).contains(&self.j) {
                    return bad(format!("BBlocks needs 1 <= j <= 6, got {}", self.j));
                }
            }
            FamilyKind::NonEinstein | FamilyKind::AdjoinedNonEinstein => {
                if !(2..=6).contains(&self.j) {
                    return bad(format!("need 2 <= j <= 6, got {}", self.j));
                }
                if self.n < 1 || self.k < 1 {
                    return bad("need n >= 1 and k >= 1".into());
                }
                if self.t.len() != self.n - 1 {
                    return bad(format!("t must have length n-1 = {}, got {}", self.n - 1, self.t.len()));
                }
                if self.t.iter().any(|x| !x.is_finite()) {
                    return bad("t entries must be finite".into());
                }
                if self.d != 0 && self.d != 3 {
                    return bad(format!("d must be 0 or 3, got {}", self.d));
                }
                if self.kind == FamilyKind::AdjoinedNonEinstein {
                    if self.adjoin_list.is_empty() {
                        return bad("adjoin_list must be nonempty".into());
                    }
                    for s in &self.adjoin_list {
                        match s.kind {
                            FamilyKind::MinimalD | FamilyKind::BBlocks => s.validate()?,
                            other => {
                                return bad(format!("adjoined tuples must be MinimalD or BBlocks, got {other:?}"))
                            }
                        }
                    }
                }
            }
            FamilyKind::J9 => {
                if !(2..=6).contains(&self.j) {
                    return bad(format!("J9 needs 2 <= j <= 6, got {}", self.j));
                }
            }
            FamilyKind::MinimalD => {
                let (Some(q), Some(p)) = (self.q, self.p) else {
                    return bad("MinimalD needs q and p".into());
                };
                if q < 2 || q % 2 != 0 {
                    return bad(format!("MinimalD needs even q, got {q}"));
                }
                let full = dim_so(q);
                if p == 0 || (p != full && p + 1 != full) {
                    return bad(format!("MinimalD in so({q}) needs p in {{{}, {full}}}", full - 1));
                }
            }
        }
        Ok(())
    }

    /// The (p, q) type of the built tensor.
    pub fn type_pq(&self) -> Result<(usize, usize)> {
        self.validate()?;
        Ok(match self.kind {
            FamilyKind::HeisenbergJ => (1, 2 * self.k),
            FamilyKind::Soliton23 => (2, 3),
            FamilyKind::BBlocks => (self.j, 4),
            FamilyKind::NonEinstein => (self.j, 2 * self.k + 4 * self.n + self.d),
            FamilyKind::J9 => (self.j, 9),
            FamilyKind::MinimalD => (self.p.unwrap_or(0), self.q.unwrap_or(0)),
            FamilyKind::AdjoinedNonEinstein => {
                let (mut p, mut q) = (self.j, 2 * self.k + 4 * self.n + self.d);
                for s in &self.adjoin_list {
                    let (ps, qs) = s.type_pq()?;
                    p += ps - 1;
                    q += qs;
                }
                (p, q)
            }
        })
    }

    /// The non-Einstein base of an adjoined family, or this family when it is not adjoined.
    pub fn base(&self) -> FamilySpec {
        match self.kind {
            FamilyKind::AdjoinedNonEinstein => FamilySpec {
                kind: FamilyKind::NonEinstein,
                adjoin_list: Vec::new(),
                ..self.clone()
            },
            _ => self.clone(),
        }
    }
}

/// Components of a concatenation family, in block order.
pub(crate) fn family_components(spec: &FamilySpec) -> Result<Vec<StructureTensor>> {
    match spec.kind {
        FamilyKind::NonEinstein | FamilyKind::AdjoinedNonEinstein => {
            let mut parts = vec![heisenberg_j(spec.k)?];
            for &t in &spec.t {
                parts.push(b_tuple(2).scaled_slot(0, t));
            }
            parts.push(b_tuple(spec.j));
            if spec.d == 3 {
                parts.push(soliton_23());
            }
            Ok(parts)
        }
        FamilyKind::J9 => Ok(vec![heisenberg_j(1)?, soliton_23(), b_tuple(spec.j)]),
        _ => Err(Error::InvalidFamily(format!("{:?} is not a concatenation family", spec.kind))),
    }
}

pub fn build_family(spec: &FamilySpec) -> Result<StructureTensor> {
    spec.validate()?;
    match spec.kind {
        FamilyKind::HeisenbergJ => heisenberg_j(spec.k),
        FamilyKind::Soliton23 => Ok(soliton_23()),
        FamilyKind::BBlocks => Ok(b_tuple(spec.j)),
        FamilyKind::NonEinstein | FamilyKind::J9 => concat_all(&family_components(spec)?),
        FamilyKind::MinimalD => build_minimal_d(spec.q.unwrap_or(0), spec.p.unwrap_or(0)),
        FamilyKind::AdjoinedNonEinstein => {
            let base = concat_all(&family_components(spec)?)?;
            let list = spec
                .adjoin_list
                .iter()
                .map(build_family)
                .collect::<Result<Vec<_>>>()?;
            adjoin(&base, &list)
        }
    }
}
