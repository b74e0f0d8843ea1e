//! Moduli dimensions about generic points and the (p,q) type classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::dim_so;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuliSource {
    TableRow,
    Dual,
    Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuliEntry {
    pub p: usize,
    pub q: usize,
    pub dim: usize,
    pub source: ModuliSource,
    /// The formula went negative and was raised to 0.
    pub clamped: bool,
}

fn table_row(p: usize, q: usize) -> Option<usize> {
    let d = dim_so(q);
    match (p, q) {
        (1, _) => Some(0),
        (2, 4) => Some(0),
        (2, q) if q % 2 == 0 && q >= 6 => Some(q / 2 - 3),
        (2, q) if q % 2 == 1 => Some(0),
        (3, 4) | (3, 5) => Some(0),
        (3, 6) => Some(2),
        _ if p == d => Some(0),
        _ => None,
    }
}

/// The general formula p·D − (q² + p² − 2) − 1 (may be negative).
pub fn moduli_formula(p: usize, q: usize) -> i64 {
    let (p, q, d) = (p as i64, q as i64, dim_so(q) as i64);
    p * d - (q * q + p * p - 2) - 1
}

/// Dimension of the moduli about a generic point of type (p,q). Table rows are
/// applied literally first, then to the dual type (D−p,q), then the formula.
pub fn generic_moduli_dim(p: usize, q: usize) -> Result<ModuliEntry> {
    if q < 2 {
        return Err(Error::InvalidType { p, q, reason: "q must be at least 2".into() });
    }
    let d = dim_so(q);
    if p < 1 || p > d {
        return Err(Error::InvalidType { p, q, reason: format!("p must lie in 1..={d}") });
    }
    let entry = |dim, source, clamped| ModuliEntry { p, q, dim, source, clamped };
    if let Some(dim) = table_row(p, q) {
        return Ok(entry(dim, ModuliSource::TableRow, false));
    }
    if let Some(dim) = table_row(d - p, q).filter(|_| d - p >= 1) {
        return Ok(entry(dim, ModuliSource::Dual, false));
    }
    let f = moduli_formula(p, q);
    Ok(entry(f.max(0) as usize, ModuliSource::Formula, f < 0))
}

/// Moduli of concatenations of generic solitons of types (p,q₁) and (p,q₂):
/// M_{p,q₁} + M_{p,q₂} − 1, floored at 0. Requires p < D − 2 for both.
pub fn concat_moduli_bound(p: usize, q1: usize, q2: usize) -> Result<usize> {
    for q in [q1, q2] {
        if q < 2 || p + 2 >= dim_so(q) {
            return Err(Error::Precondition(format!(
                "concatenation bound needs p < D - 2 for q = {q} (D = {}), got p = {p}",
                dim_so(q.max(2))
            )));
        }
    }
    let a = generic_moduli_dim(p, q1)?.dim as i64;
    let b = generic_moduli_dim(p, q2)?.dim as i64;
    Ok((a + b - 1).max(0) as usize)
}

/// Type (2,2k+1) from (2,2i+1) and (2,2k−2i): dimension k − i − 4, for 2 ≤ i ≤ k − 4.
pub fn odd_pair_moduli(k: usize, i: usize) -> Result<usize> {
    if i < 2 || i + 4 > k {
        return Err(Error::Precondition(format!("need 2 <= i <= k - 4, got k = {k}, i = {i}")));
    }
    concat_moduli_bound(2, 2 * i + 1, 2 * k - 2 * i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub in_region: bool,
    /// (q − 4(p+8)/5 − 7)/8, possibly negative.
    pub moduli_lower_bound: f64,
    /// The bound as a dimension: floor of its positive part.
    pub floored: usize,
}

/// Region 8 ≤ q, 2 ≤ p ≤ 5q/4 − 8 covered by adjoined non-Einstein families.
pub fn non_einstein_region(p: usize, q: usize) -> RegionReport {
    let (pf, qf) = (p as f64, q as f64);
    // 4p ≤ 5q − 32 is the integer form of p ≤ 5q/4 − 8.
    let in_region = q >= 8 && p >= 2 && 4 * p + 32 <= 5 * q;
    let bound = (qf - 0.8 * (pf + 8.0) - 7.0) / 8.0;
    RegionReport {
        in_region,
        moduli_lower_bound: bound,
        floored: bound.max(0.0).floor() as usize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    AllEinstein,
    ExistsNonEinstein,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRow {
    pub p: usize,
    pub q: usize,
    pub label: RegionLabel,
    pub source: String,
}

/// Whether (p,q) = (j, 2k+4n+d) for j ∈ 2..=6, n ≥ 1, d ∈ {0,3}, 2k ≥ 4n+d.
pub fn concatenation_family_type(p: usize, q: usize) -> Option<(usize, usize, usize)> {
    if !(2..=6).contains(&p) {
        return None;
    }
    for d in [0, 3] {
        for n in 1.. {
            let rest = match q.checked_sub(4 * n + d) {
                Some(r) => r,
                None => break,
            };
            if rest % 2 == 0 && rest >= 4 * n + d && rest > 0 {
                return Some((rest / 2, n, d));
            }
        }
    }
    None
}

pub fn classify(p: usize, q: usize) -> RegionRow {
    let d = dim_so(q);
    let row = |label, source: &str| RegionRow { p, q, label, source: source.into() };
    if p == 1 {
        return row(RegionLabel::AllEinstein, "Heisenberg-type center of dimension 1");
    }
    if p == d {
        return row(RegionLabel::AllEinstein, "unique free algebra of type (D,q)");
    }
    if p + 1 == d {
        return row(RegionLabel::AllEinstein, "Nikolayevsky: type (D-1,q)");
    }
    if p + q <= 6 {
        return row(RegionLabel::AllEinstein, "Will: dimension at most 6");
    }
    if let Some((k, n, dd)) = concatenation_family_type(p, q) {
        return RegionRow {
            p,
            q,
            label: RegionLabel::ExistsNonEinstein,
            source: format!("concatenation family j={p}, k={k}, n={n}, d={dd}"),
        };
    }
    if q == 9 && (3..=6).contains(&p) {
        return row(RegionLabel::ExistsNonEinstein, "concatenation with the (2,3) soliton, q = 9");
    }
    if non_einstein_region(p, q).in_region {
        return row(RegionLabel::ExistsNonEinstein, "adjoined families region");
    }
    if (p, q) == (3, 6) {
        return row(RegionLabel::ExistsNonEinstein, "Will: curve of type (3,6)");
    }
    row(RegionLabel::Unknown, "")
}

/// One row per type (p,q) with 2 ≤ q ≤ q_max and 1 ≤ p ≤ D_q.
pub fn region_table(q_max: usize) -> Result<Vec<RegionRow>> {
    if q_max < 3 {
        return Err(Error::Precondition(format!("q_max must be at least 3, got {q_max}")));
    }
    Ok((2..=q_max)
        .flat_map(|q| (1..=dim_so(q)).map(move |p| classify(p, q)))
        .collect())
}
