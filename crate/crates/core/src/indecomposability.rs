//! Indecomposability: sufficient criteria and a proof-on-success decomposition search.
//!
//! With no common kernel, C is decomposable iff span⟨C⟩ has a basis {Zᵢ} ∪ {Wⱼ}
//! with ℝ^q = ∩Ker Wⱼ ⊕ ∩Ker Zᵢ. Equivalently the algebra
//! 𝒜 = {T : Y T ∈ span⟨C⟩ for all Y ∈ span⟨C⟩} contains an idempotent P ≠ 0, I:
//! then Zᵢ = YᵢP and Wⱼ = Yⱼ(I − P). The search looks for P as a spectral
//! projector of a random element of 𝒜.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certification::{non_einstein_certificate, Certificate, CertifyOptions, Condition, Verdict};
use crate::constructions::{adjoin, build_family, concat_all, family_components, FamilyKind, FamilySpec};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::tensor::{dim_so, group_act, GroupElement, StructureTensor, DEFAULT_RANK_TOL};

/// Relative singular-value threshold for kernels.
pub const KERNEL_TOL: f64 = 1e-8;

/// Orthonormal basis (columns) of ∩ᵢ Ker Cᵢ.
pub fn common_kernel(c: &StructureTensor) -> Mat {
    let (p, q) = (c.p(), c.q());
    let mut stacked = Mat::zeros(p * q, q);
    for (k, m) in c.mats().iter().enumerate() {
        stacked.view_mut((k * q, 0), (q, q)).copy_from(m);
    }
    if linalg::max_abs(&stacked) == 0.0 {
        return Mat::identity(q, q);
    }
    linalg::nullspace(&stacked, KERNEL_TOL)
}

fn ratio_of(m: &Mat) -> f64 {
    let s = linalg::singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

fn combo(c: &StructureTensor, a: &[f64]) -> Mat {
    let q = c.q();
    let mut m = Mat::zeros(q, q);
    for (x, ck) in a.iter().zip(c.mats()) {
        m += ck * *x;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilReport {
    pub nonsingular: bool,
    /// Smallest σ_min/σ_max over all evaluated combinations.
    pub min_ratio: f64,
    pub evaluated: usize,
    /// For p = 2: whether C₂⁻¹C₁ was checked for real eigenvalues.
    pub exact_p2: bool,
}

const PENCIL_RATIO_TOL: f64 = 1e-8;

/// Checks that every nontrivial combination Σ aᵢCᵢ is nonsingular: exactly for
/// p ≤ 2, on a deterministic grid for p = 3, and on `samples` seeded random unit
/// vectors in all cases.
pub fn pencil_report(c: &StructureTensor, samples: usize, seed: u64) -> PencilReport {
    let (p, q) = (c.p(), c.q());
    if q % 2 == 1 {
        return PencilReport {
            nonsingular: false,
            min_ratio: 0.0,
            evaluated: 0,
            exact_p2: false,
        };
    }
    let mut min_ratio = f64::INFINITY;
    let mut evaluated = 0;
    let mut eval = |a: &[f64]| {
        min_ratio = min_ratio.min(ratio_of(&combo(c, a)));
        evaluated += 1;
    };
    let mut exact_ok = true;
    let mut exact_p2 = false;
    match p {
        1 => eval(&[1.0]),
        2 => {
            exact_p2 = true;
            eval(&[0.0, 1.0]);
            let c2 = c.mat(1);
            match c2.clone().try_inverse() {
                Some(inv) if ratio_of(c2) > PENCIL_RATIO_TOL => {
                    // a C₁ + b C₂ singular with a ≠ 0 iff −b/a is an eigenvalue of C₂⁻¹C₁.
                    let ev = (inv * c.mat(0)).complex_eigenvalues();
                    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
                    exact_ok = ev.iter().all(|z| z.im.abs() > 1e-6 * scale);
                }
                _ => exact_ok = false,
            }
            let n = 8 * q + 1;
            for i in 0..n {
                let th = std::f64::consts::PI * i as f64 / n as f64;
                eval(&[th.cos(), th.sin()]);
            }
        }
        3 => {
            let n = 4 * q + 1;
            for i in 0..=n {
                let th = std::f64::consts::PI * i as f64 / n as f64;
                for k in 0..(2 * n) {
                    let ph = std::f64::consts::PI * k as f64 / n as f64;
                    eval(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                }
            }
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            eval(&a.iter().map(|x| x / n).collect::<Vec<_>>());
        }
    }
    PencilReport {
        nonsingular: exact_ok && min_ratio > PENCIL_RATIO_TOL,
        min_ratio,
        evaluated,
        exact_p2,
    }
}

pub fn pencil_nonsingular(c: &StructureTensor, samples: usize) -> bool {
    pencil_report(c, samples, 0x9e37_79b9).nonsingular
}

/// Lower end of the large-p range: (q−2)(q−3)/2 + 2.
pub fn large_p_lower(q: usize) -> usize {
    if q < 3 {
        2
    } else {
        (q - 2) * (q - 3) / 2 + 2
    }
}

const META_TOL: f64 = 1e-12;

fn criteria_inner(c: &StructureTensor, meta: Option<&FamilySpec>, certify: &CertifyOptions) -> Certificate {
    let (p, q) = (c.p(), c.q());
    let mut conds = Vec::new();
    let mut notes = Vec::new();
    let typed = c.is_type_pq(DEFAULT_RANK_TOL);
    conds.push(Condition::new("components independent", p as f64, typed));
    let ker = common_kernel(c).ncols();
    conds.push(Condition::new("no common kernel", ker as f64, ker == 0));
    let finish = |verdict, conds, notes| Certificate {
        verdict,
        conditions: conds,
        family: meta.cloned(),
        notes,
    };
    if !typed || ker != 0 {
        if ker != 0 && ker < q {
            notes.push("a common kernel is an abelian direct factor".into());
        }
        return finish(Verdict::Inconclusive, conds, notes);
    }

    let lo = large_p_lower(q);
    let a = q % 2 == 0 && lo <= p && p <= dim_so(q);
    conds.push(
        Condition::new("(a) q even and large p", p as f64, a)
            .with_detail(format!("needs {lo} <= p <= {} with q even", dim_so(q))),
    );
    if q == 6 {
        notes.push(format!(
            "for q = 6 this criterion covers only {lo} <= p <= 15; smaller p such as 3 <= p <= 6 need another criterion"
        ));
    }
    let b = p == 2 && q == 3;
    conds.push(Condition::new("(b) type (2,3)", p as f64, b));
    let pencil = pencil_report(c, 64, 0x9e37_79b9);
    conds.push(
        Condition::new("pencil nonsingular", pencil.min_ratio, pencil.nonsingular)
            .with_detail(format!("{} combinations evaluated", pencil.evaluated)),
    );

    let meta_ok = meta.and_then(|m| build_family(m).ok()).and_then(|t| t.max_abs_diff(c));
    let meta_matches = matches!(meta_ok, Some(d) if d <= META_TOL);
    if meta.is_some() {
        conds.push(Condition::new("metadata builds this tensor", meta_ok.unwrap_or(f64::INFINITY), meta_matches));
    }

    let mut cc = false;
    if p == 2 && meta_matches {
        let m = meta.expect("checked");
        if matches!(m.kind, FamilyKind::NonEinstein | FamilyKind::J9 | FamilyKind::AdjoinedNonEinstein) {
            if let Ok(cert) = non_einstein_certificate(m, certify) {
                cc = cert.verdict == Verdict::NonDistinguished;
            }
        }
    }
    conds.push(Condition::new("(c) type (2,q) non-Einstein", p as f64, cc));

    let mut dd = false;
    let mut detail = String::from("no assembly metadata");
    if meta_matches {
        if let Some(a) = Assembly::from_family(meta.expect("checked")) {
            (dd, detail) = assembly_verdict(&a, certify);
        }
    }
    conds.push(Condition::new("(d) assembled from indecomposables", 0.0, dd).with_detail(detail));

    let verdict = if a || b || pencil.nonsingular || cc || dd {
        Verdict::Indecomposable
    } else {
        Verdict::Inconclusive
    };
    finish(verdict, conds, notes)
}

/// A tensor part with optional family metadata (needed by criterion (c)).
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub tensor: StructureTensor,
    pub family: Option<FamilySpec>,
}

impl Component {
    pub fn new(tensor: StructureTensor) -> Self {
        Self { tensor, family: None }
    }

    pub fn from_family(spec: &FamilySpec) -> Result<Self> {
        Ok(Self {
            tensor: build_family(spec)?,
            family: Some(spec.clone()),
        })
    }
}

/// How a tensor is assembled from smaller tuples.
#[derive(Debug, Clone, PartialEq)]
pub enum Assembly {
    /// Concatenation; parts with fewer slots are padded with zeros.
    Concat(Vec<Component>),
    /// base +_a [tuples…].
    Adjoin { base: Component, tuples: Vec<Component> },
}

impl Assembly {
    pub fn build(&self) -> Result<StructureTensor> {
        match self {
            Assembly::Concat(parts) => concat_all(&parts.iter().map(|c| c.tensor.clone()).collect::<Vec<_>>()),
            Assembly::Adjoin { base, tuples } => {
                adjoin(&base.tensor, &tuples.iter().map(|c| c.tensor.clone()).collect::<Vec<_>>())
            }
        }
    }

    fn from_family(meta: &FamilySpec) -> Option<Self> {
        match meta.kind {
            FamilyKind::NonEinstein | FamilyKind::J9 => Some(Assembly::Concat(
                family_components(meta).ok()?.into_iter().map(Component::new).collect(),
            )),
            FamilyKind::AdjoinedNonEinstein => Some(Assembly::Adjoin {
                base: Component::from_family(&meta.base()).ok()?,
                tuples: meta.adjoin_list.iter().map(Component::from_family).collect::<Result<_>>().ok()?,
            }),
            _ => None,
        }
    }
}

fn component_certified(c: &Component, certify: &CertifyOptions) -> bool {
    criteria_inner(&c.tensor, c.family.as_ref(), certify).verdict == Verdict::Indecomposable
}

/// Criterion (d): a concatenation with a unique largest p, or an adjoin, whose
/// parts are each certified indecomposable.
fn assembly_verdict(a: &Assembly, certify: &CertifyOptions) -> (bool, String) {
    match a {
        Assembly::Concat(parts) => {
            let ps: Vec<usize> = parts.iter().map(|c| c.tensor.p()).collect();
            let Some(&pmax) = ps.iter().max() else {
                return (false, "empty concatenation".into());
            };
            if ps.iter().filter(|&&p| p == pmax).count() != 1 {
                return (false, format!("component p values {ps:?}: the largest is not unique"));
            }
            let ok = parts.iter().all(|c| component_certified(c, certify));
            (ok, format!("concatenation of components with p values {ps:?}"))
        }
        Assembly::Adjoin { base, tuples } => {
            let ok = !tuples.is_empty()
                && component_certified(base, certify)
                && tuples.iter().all(|c| component_certified(c, certify));
            (ok, format!("adjoin of the base with {} tuple(s)", tuples.len()))
        }
    }
}

/// Criteria on an assembled tensor: the direct criteria on the result, plus (d)
/// from the parts. Returns the tensor with its certificate.
pub fn assembly_criteria(a: &Assembly) -> Result<(StructureTensor, Certificate)> {
    let c = a.build()?;
    let certify = CertifyOptions::default();
    let mut cert = criteria_inner(&c, None, &certify);
    if cert.verdict != Verdict::Indecomposable {
        let typed = cert.conditions.iter().take(2).all(|x| x.satisfied);
        let (ok, detail) = assembly_verdict(a, &certify);
        let ok = ok && typed;
        if let Some(cond) = cert.conditions.iter_mut().find(|x| x.name.starts_with("(d)")) {
            cond.satisfied = ok;
            cond.detail = Some(detail);
        }
        if ok {
            cert.verdict = Verdict::Indecomposable;
        }
    }
    Ok((c, cert))
}

/// Runs the sufficient criteria; `Indecomposable` if any fires.
pub fn structural_criteria(c: &StructureTensor, meta: Option<&FamilySpec>) -> Certificate {
    criteria_inner(c, meta, &CertifyOptions::default())
}

/// Same as [`structural_criteria`] with explicit certificate options for (c).
pub fn structural_criteria_with(c: &StructureTensor, meta: Option<&FamilySpec>, certify: &CertifyOptions) -> Certificate {
    criteria_inner(c, meta, certify)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_p: usize,
    pub attempts: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_p: 4,
            attempts: 8,
            seed: 0x00de_c0de,
        }
    }
}

/// A verified splitting ℝ^q = V₁ ⊕ V₂ with span⟨C⟩ = span{Zᵢ} ⊕ span{Wⱼ},
/// V₂ = ∩Ker Zᵢ and V₁ = ∩Ker Wⱼ.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub v1: Mat,
    pub v2: Mat,
    pub z: Vec<Mat>,
    pub w: Vec<Mat>,
    /// (g, h) taking C to block form: the first |Z| slots live on the leading
    /// dim V₁ coordinates, the rest on the trailing dim V₂ coordinates.
    pub element: GroupElement,
    pub block_form: StructureTensor,
    /// Largest entry of the block form outside its blocks, relative to the largest entry.
    pub block_error: f64,
}

#[derive(Serialize)]
struct DecompositionRepr {
    v1: Vec<Vec<f64>>,
    v2: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    block_error: f64,
}

impl Serialize for Decomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cols = |m: &Mat| (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect();
        DecompositionRepr {
            v1: cols(&self.v1),
            v2: cols(&self.v2),
            z: self.z.iter().map(linalg::flatten_row_major).collect(),
            w: self.w.iter().map(linalg::flatten_row_major).collect(),
            block_error: self.block_error,
        }
        .serialize(s)
    }
}

fn orthonormal_span(mats: &[Mat], q: usize) -> Vec<Mat> {
    if mats.is_empty() {
        return Vec::new();
    }
    let rows: Vec<_> = mats.iter().map(|m| DVector::from_vec(linalg::flatten_row_major(m))).collect();
    let a = Mat::from_columns(&rows);
    let basis = linalg::column_space(&a, KERNEL_TOL);
    (0..basis.ncols())
        .map(|j| linalg::from_row_major(q, q, basis.column(j).as_slice()))
        .collect()
}

/// Basis of 𝒜 as q×q matrices.
fn split_algebra(ys: &[Mat], q: usize) -> Vec<Mat> {
    let p = ys.len();
    let n = q * q;
    let mut a = Mat::zeros(p * n, n);
    for (col, (ai, bi)) in (0..q).flat_map(|i| (0..q).map(move |j| (i, j))).enumerate() {
        // T = E_{ai,bi}: Y T has column bi equal to Y e_ai.
        for (k, y) in ys.iter().enumerate() {
            let mut m = Mat::zeros(q, q);
            for r in 0..q {
                m[(r, bi)] = y[(r, ai)];
            }
            for yk in ys {
                let c = linalg::frob_inner(&m, yk);
                m -= yk * c;
            }
            for (e, v) in linalg::flatten_row_major(&m).into_iter().enumerate() {
                a[(k * n + e, col)] = v;
            }
        }
    }
    let ns = linalg::nullspace(&a, 1e-9);
    (0..ns.ncols())
        .map(|j| linalg::from_row_major(q, q, ns.column(j).as_slice()))
        .collect()
}

/// sign(X) by the scaled Newton iteration; `None` if X is (nearly) singular.
fn matrix_sign(x: &Mat) -> Option<Mat> {
    let mut s = x.clone();
    for _ in 0..100 {
        let inv = s.clone().try_inverse()?;
        let det = s.determinant().abs();
        let n = s.nrows() as f64;
        let mu = if det > 0.0 && det.is_finite() { det.powf(-1.0 / n) } else { 1.0 };
        let next = (&s * mu + inv / mu) * 0.5;
        let diff = linalg::max_abs(&(&next - &s));
        s = next;
        if diff <= 1e-14 * linalg::max_abs(&s).max(1.0) {
            return Some(s);
        }
    }
    let check = linalg::max_abs(&(&s * &s - Mat::identity(s.nrows(), s.nrows())));
    (check < 1e-10).then_some(s)
}

/// Splitting points between clusters of eigenvalue real parts.
fn real_part_gaps(t: &Mat) -> Vec<f64> {
    let ev = t.clone().complex_eigenvalues();
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    re.windows(2)
        .filter(|w| w[1] - w[0] > 1e-6 * scale)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect()
}

fn coefficients_in(c: &StructureTensor, m: &Mat) -> DVector<f64> {
    let cm = c.coefficient_matrix();
    let target = {
        let single = StructureTensor::from_projected(c.q(), vec![m.clone()]);
        single.coefficient_matrix()
    };
    // Solve xᵀ cm = target (least squares through the normal equations).
    let g = &cm * cm.transpose();
    let rhs = &cm * target.transpose();
    g.lu().solve(&rhs).map(|x| x.column(0).into_owned()).unwrap_or_else(|| DVector::zeros(c.p()))
}

fn try_projector(c: &StructureTensor, ys: &[Mat], pr: &Mat) -> Option<Decomposition> {
    let q = c.q();
    let id = Mat::identity(q, q);
    let qr = &id - pr;
    if linalg::max_abs(&(pr * pr - pr)) > 1e-8 {
        return None;
    }
    let z_raw: Vec<Mat> = ys.iter().map(|y| y * pr).collect();
    let w_raw: Vec<Mat> = ys.iter().map(|y| y * &qr).collect();
    let mut z = orthonormal_span(&z_raw.iter().map(linalg::skew_part).collect::<Vec<_>>(), q);
    let mut w = orthonormal_span(&w_raw.iter().map(linalg::skew_part).collect::<Vec<_>>(), q);
    let mut v1 = linalg::column_space(pr, 1e-8);
    let mut v2 = linalg::column_space(&qr, 1e-8);
    if z.is_empty() || w.is_empty() || z.len() + w.len() != ys.len() || v1.ncols() == 0 || v2.ncols() == 0 {
        return None;
    }
    // Put the side carrying the lowest-index component first.
    let first_index = |ms: &[Mat]| -> usize {
        ms.iter()
            .filter_map(|m| {
                let x = coefficients_in(c, m);
                let top = x.amax();
                (0..x.len()).find(|&i| x[i].abs() > 1e-8 * top)
            })
            .min()
            .unwrap_or(usize::MAX)
    };
    if first_index(&w) < first_index(&z) {
        std::mem::swap(&mut z, &mut w);
        std::mem::swap(&mut v1, &mut v2);
    }
    let ker_of = |ms: &[Mat]| -> Mat {
        let mut st = Mat::zeros(ms.len() * q, q);
        for (k, m) in ms.iter().enumerate() {
            st.view_mut((k * q, 0), (q, q)).copy_from(m);
        }
        linalg::nullspace(&st, KERNEL_TOL)
    };
    if ker_of(&z).ncols() != v2.ncols() || ker_of(&w).ncols() != v1.ncols() {
        return None;
    }
    let zs: f64 = z.iter().map(|m| linalg::max_abs(&(m * &v2))).fold(0.0, f64::max);
    let ws: f64 = w.iter().map(|m| linalg::max_abs(&(m * &v1))).fold(0.0, f64::max);
    if zs > 1e-8 || ws > 1e-8 {
        return None;
    }
    // Reconstruct: x = B x′ with B = [V₁ | V₂] turns each matrix into Bᵀ Y B.
    let b = Mat::from_columns(
        &(0..v1.ncols())
            .map(|j| v1.column(j).into_owned())
            .chain((0..v2.ncols()).map(|j| v2.column(j).into_owned()))
            .collect::<Vec<_>>(),
    );
    let p = c.p();
    let mut h = Mat::zeros(p, p);
    for (row, m) in z.iter().chain(&w).enumerate() {
        let x = coefficients_in(c, m);
        for k in 0..p {
            h[(row, k)] = x[k];
        }
    }
    let element = GroupElement::new(b.transpose(), h).ok()?;
    let block_form = group_act(&element, c).ok()?;
    let l1 = v1.ncols();
    let top = block_form.mats().iter().map(linalg::max_abs).fold(0.0, f64::max);
    let mut err = 0.0_f64;
    for (k, m) in block_form.mats().iter().enumerate() {
        for i in 0..q {
            for j in 0..q {
                let inside = if k < z.len() { i < l1 && j < l1 } else { i >= l1 && j >= l1 };
                if !inside {
                    err = err.max(m[(i, j)].abs());
                }
            }
        }
    }
    let block_error = err / top;
    if block_error > 1e-8 {
        return None;
    }
    Some(Decomposition {
        v1,
        v2,
        z,
        w,
        element,
        block_form,
        block_error,
    })
}

/// Searches for a splitting. `Some` is a verified decomposition; `None` is
/// evidence of indecomposability, not proof.
pub fn decomposition_search(c: &StructureTensor, opts: &SearchOptions) -> Result<Option<Decomposition>> {
    let (p, q) = (c.p(), c.q());
    if p > opts.max_p {
        return Err(Error::Unsupported(format!("decomposition search is capped at p <= {}, got {p}", opts.max_p)));
    }
    if common_kernel(c).ncols() > 0 {
        return Err(Error::Precondition("the tensor has a common kernel".into()));
    }
    let ys = orthonormal_span(c.mats(), q);
    if ys.len() != p {
        return Err(Error::Precondition("the components are linearly dependent".into()));
    }
    let alg = split_algebra(&ys, q);
    if alg.len() <= 1 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.attempts {
        let mut t = Mat::zeros(q, q);
        for b in &alg {
            let x: f64 = rng.sample(StandardNormal);
            t += b * x;
        }
        for sigma in real_part_gaps(&t) {
            let shifted = &t - Mat::identity(q, q) * sigma;
            let Some(s) = matrix_sign(&shifted) else { continue };
            let pr = (Mat::identity(q, q) + s) * 0.5;
            if let Some(d) = try_projector(c, &ys, &pr) {
                return Ok(Some(d));
            }
        }
    }
    Ok(None)
}
