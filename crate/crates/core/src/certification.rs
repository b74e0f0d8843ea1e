//! Certificates for the non-Einstein families.
//!
//! The families live in a subspace W of block tensors whose moment map is
//! block-scalar (H-detection). A point of W is distinguished only if every
//! "coefficient" of m(w)·w agrees; a fixed linear combination of coefficient
//! differences equals a positive form on the open stratum, which rules that out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constructions::{b_matrix, block_diag, build_family, j_matrix, FamilyKind, FamilySpec};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::moment::{distinguished_report, moment, MomentImage};
use crate::tensor::{group_act, GroupElement, StructureTensor};

/// Where the (2,3) soliton block sits in a W point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolitonPlacement {
    None,
    /// Right after the J head (the (j,9) examples).
    AfterHead,
    /// After the last tuple (the d = 3 variant).
    Tail,
}

/// An adjoined tuple D̃ = (λD₁, μD₂, …, μD_p).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjoinedBlock {
    pub d: StructureTensor,
    pub lambda: f64,
    pub mu: f64,
}

/// A point of W.
///
/// `b` and `c` hold the middle tuples only (length n−1); the final pair is
/// aliased as b_n = d₁ and c_n = d₂, see [`WPoint::b_full`].
#[derive(Debug, Clone, PartialEq)]
pub struct WPoint {
    pub k: usize,
    pub n: usize,
    pub j: usize,
    pub a1: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub soliton: SolitonPlacement,
    pub e: [f64; 2],
    pub adjoined: Vec<AdjoinedBlock>,
}

impl WPoint {
    /// The point of W carrying the family tensor itself.
    pub fn from_spec(spec: &FamilySpec) -> Result<Self> {
        spec.validate()?;
        let (k, n, j, soliton) = match spec.kind {
            FamilyKind::NonEinstein | FamilyKind::AdjoinedNonEinstein => (
                spec.k,
                spec.n,
                spec.j,
                if spec.d == 3 { SolitonPlacement::Tail } else { SolitonPlacement::None },
            ),
            FamilyKind::J9 => (1, 1, spec.j, SolitonPlacement::AfterHead),
            other => return Err(Error::InvalidFamily(format!("{other:?} has no W subspace"))),
        };
        let adjoined = spec
            .adjoin_list
            .iter()
            .map(|s| {
                Ok(AdjoinedBlock {
                    d: build_family(s)?,
                    lambda: 1.0,
                    mu: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = if spec.kind == FamilyKind::J9 { 0 } else { n - 1 };
        Ok(Self {
            k,
            n,
            j,
            a1: 1.0,
            b: if spec.kind == FamilyKind::J9 { Vec::new() } else { spec.t.clone() },
            c: vec![1.0; m],
            d: vec![1.0; j],
            soliton,
            e: [1.0, 1.0],
            adjoined,
        })
    }

    /// Same shape as `self`, every coefficient drawn with random sign and
    /// magnitude in [0.25, 2).
    pub fn randomized<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut draw = || {
            let m: f64 = rng.random_range(0.25..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let mut w = self.clone();
        w.a1 = draw();
        w.b.iter_mut().for_each(|x| *x = draw());
        w.c.iter_mut().for_each(|x| *x = draw());
        w.d.iter_mut().for_each(|x| *x = draw());
        w.e = [draw(), draw()];
        for a in &mut w.adjoined {
            a.lambda = draw();
            a.mu = draw();
        }
        w
    }

    /// b₁,…,b_n with b_n = d₁.
    pub fn b_full(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.push(self.d[0]);
        v
    }

    /// c₁,…,c_n with c_n = d₂.
    pub fn c_full(&self) -> Vec<f64> {
        let mut v = self.c.clone();
        v.push(self.d[1]);
        v
    }

    fn check_shape(&self) -> Result<()> {
        let bad = |m: String| Err(Error::DimensionMismatch(m));
        if !(2..=6).contains(&self.j) || self.k < 1 || self.n < 1 {
            return bad(format!("need 2 <= j <= 6, k >= 1, n >= 1 (j={}, k={}, n={})", self.j, self.k, self.n));
        }
        if self.b.len() != self.n - 1 || self.c.len() != self.n - 1 {
            return bad(format!("b and c need length n-1 = {}", self.n - 1));
        }
        if self.d.len() != self.j {
            return bad(format!("d needs length j = {}", self.j));
        }
        for a in &self.adjoined {
            let d1 = a.d.mat(0);
            let q = a.d.q();
            if linalg::max_abs(&(d1 * d1 + Mat::identity(q, q))) > 1e-12 {
                return bad("adjoined tuple needs D1^2 = -Id".into());
            }
        }
        Ok(())
    }

    /// Open stratum: every coefficient nonzero.
    pub fn in_open_stratum(&self) -> bool {
        let mut all = vec![self.a1];
        all.extend(&self.b);
        all.extend(&self.c);
        all.extend(&self.d);
        if self.soliton != SolitonPlacement::None {
            all.extend(self.e);
        }
        for a in &self.adjoined {
            all.push(a.lambda);
            all.push(a.mu);
        }
        all.iter().all(|&x| x != 0.0)
    }

    /// Shape data needed by the closed-form coefficients.
    pub fn shape(&self) -> WShape {
        WShape {
            k: self.k,
            n: self.n,
            j: self.j,
            soliton: self.soliton,
            adjoined: self.adjoined.iter().map(|a| AdjoinedShape::of(&a.d)).collect(),
        }
    }

    /// Coefficients in component order, see [`WShape::names`].
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = vec![self.a1];
        for i in 0..self.n - 1 {
            v.push(self.b[i]);
            v.push(self.c[i]);
        }
        if self.soliton == SolitonPlacement::AfterHead {
            v.extend(self.e);
        }
        v.extend(&self.d);
        if self.soliton == SolitonPlacement::Tail {
            v.extend(self.e);
        }
        for a in &self.adjoined {
            v.push(a.lambda);
            v.push(a.mu);
        }
        v
    }
}

/// Summary of an adjoined tuple: m₁(D) = ρ·Id, ‖D₁‖², and the mean ‖Dᵢ‖² over i ≥ 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjoinedShape {
    pub q: usize,
    pub p: usize,
    pub rho: f64,
    pub s1: f64,
    pub s_rest: f64,
}

impl AdjoinedShape {
    fn of(d: &StructureTensor) -> Self {
        let m = moment(d);
        let q = d.q();
        let p = d.p();
        let s_rest = if p > 1 {
            (1..p).map(|i| m.m2[(i, i)]).sum::<f64>() / (p - 1) as f64
        } else {
            0.0
        };
        Self {
            q,
            p,
            rho: m.m1.trace() / q as f64,
            s1: m.m2[(0, 0)],
            s_rest,
        }
    }
}

/// The discrete shape of W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WShape {
    pub k: usize,
    pub n: usize,
    pub j: usize,
    pub soliton: SolitonPlacement,
    pub adjoined: Vec<AdjoinedShape>,
}

struct Index {
    a: usize,
    b: Vec<usize>,
    c: Vec<usize>,
    d: Vec<usize>,
    e: Option<[usize; 2]>,
    lambda: Vec<usize>,
    mu: Vec<usize>,
    len: usize,
}

impl WShape {
    fn index(&self) -> Index {
        let mut next = 0;
        let mut take = || {
            next += 1;
            next - 1
        };
        let a = take();
        let (mut b, mut c) = (Vec::new(), Vec::new());
        for _ in 0..self.n - 1 {
            b.push(take());
            c.push(take());
        }
        let mut e = None;
        if self.soliton == SolitonPlacement::AfterHead {
            e = Some([take(), take()]);
        }
        let d = (0..self.j).map(|_| take()).collect();
        if self.soliton == SolitonPlacement::Tail {
            e = Some([take(), take()]);
        }
        let (mut lambda, mut mu) = (Vec::new(), Vec::new());
        for _ in &self.adjoined {
            lambda.push(take());
            mu.push(take());
        }
        let len = take();
        Index { a, b, c, d, e, lambda, mu, len }
    }

    /// Number of free coefficients.
    pub fn len(&self) -> usize {
        self.index().len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coefficient names in component order.
    pub fn names(&self) -> Vec<String> {
        let ix = self.index();
        let mut names = vec![String::new(); ix.len];
        names[ix.a] = "a1".into();
        for i in 0..self.n - 1 {
            names[ix.b[i]] = format!("b{}", i + 1);
            names[ix.c[i]] = format!("c{}", i + 1);
        }
        for (i, &p) in ix.d.iter().enumerate() {
            names[p] = format!("d{}", i + 1);
        }
        if let Some([e1, e2]) = ix.e {
            names[e1] = "e1".into();
            names[e2] = "e2".into();
        }
        for (l, (&lp, &mp)) in ix.lambda.iter().zip(&ix.mu).enumerate() {
            names[lp] = format!("lambda{}", l + 1);
            names[mp] = format!("mu{}", l + 1);
        }
        names
    }

    /// Diagonal of m₂(w) from the squared coefficients u.
    pub fn m2_diagonal(&self, u: &[f64]) -> Vec<f64> {
        let ix = self.index();
        let p = self.j + self.adjoined.iter().map(|a| a.p - 1).sum::<usize>();
        let mut g = vec![0.0; p];
        let (e1, e2) = ix.e.map_or((0.0, 0.0), |[x, y]| (u[x], u[y]));
        let d = |i: usize| u[ix.d[i]];
        g[0] = 2.0 * self.k as f64 * u[ix.a] + 4.0 * (ix.b.iter().map(|&i| u[i]).sum::<f64>() + d(0)) + 2.0 * e1;
        g[1] = 4.0 * (ix.c.iter().map(|&i| u[i]).sum::<f64>() + d(1)) + 2.0 * e2;
        for (i, gi) in g.iter_mut().enumerate().take(self.j).skip(2) {
            *gi = 4.0 * d(i);
        }
        let mut slot = self.j;
        for (l, a) in self.adjoined.iter().enumerate() {
            g[self.j - 1] += u[ix.lambda[l]] * a.s1;
            for _ in 1..a.p {
                g[slot] = u[ix.mu[l]] * a.s_rest;
                slot += 1;
            }
        }
        g
    }

    /// Closed-form coefficients of m(w)·w, one per component, from u = coefficient².
    pub fn closed_form(&self, u: &[f64]) -> Vec<f64> {
        let ix = self.index();
        let g = self.m2_diagonal(u);
        let s: f64 = ix.d.iter().map(|&i| u[i]).sum();
        let mut out = vec![0.0; ix.len];
        out[ix.a] = 4.0 * u[ix.a] + g[0];
        for i in 0..self.n - 1 {
            let bc = 4.0 * (u[ix.b[i]] + u[ix.c[i]]);
            out[ix.b[i]] = bc + g[0];
            out[ix.c[i]] = bc + g[1];
        }
        for (i, &p) in ix.d.iter().enumerate() {
            out[p] = 4.0 * s + g[i];
        }
        if let Some([e1, e2]) = ix.e {
            out[e1] = 4.0 * u[e1] + 2.0 * u[e2] + g[0];
            out[e2] = 2.0 * u[e1] + 4.0 * u[e2] + g[1];
        }
        for (l, a) in self.adjoined.iter().enumerate() {
            let kappa = 2.0 * u[ix.lambda[l]] + u[ix.mu[l]] * (a.rho - 2.0);
            out[ix.lambda[l]] = 2.0 * kappa + g[self.j - 1];
            out[ix.mu[l]] = 2.0 * kappa + u[ix.mu[l]] * a.s_rest;
        }
        out
    }

    /// Reference coefficient expressions, evaluated literally and kept for
    /// cross-checking. `None` where no reference form exists (soliton variants, λ and μ).
    pub fn displayed(&self, u: &[f64]) -> Vec<Option<f64>> {
        let ix = self.index();
        let mut out = vec![None; ix.len];
        if self.soliton != SolitonPlacement::None {
            return out;
        }
        let k = self.k as f64;
        let sb: f64 = ix.b.iter().map(|&i| u[i]).sum::<f64>() + u[ix.d[0]];
        let sc: f64 = ix.c.iter().map(|&i| u[i]).sum::<f64>() + u[ix.d[1]];
        let rhs1 = 2.0 * k * u[ix.a] + 4.0 * sb;
        let rhs2 = 4.0 * sc;
        let lhs_last = 4.0 * (u[ix.d[0]] + u[ix.d[1]]) + 4.0 * ix.d[2..].iter().map(|&i| u[i]).sum::<f64>();
        out[ix.a] = Some(4.0 * u[ix.a] + rhs1);
        for i in 0..self.n - 1 {
            let bc = 4.0 * (u[ix.b[i]] + u[ix.c[i]]);
            out[ix.b[i]] = Some(bc + rhs1);
            out[ix.c[i]] = Some(bc + rhs2);
        }
        out[ix.d[0]] = Some(lhs_last + rhs1);
        out[ix.d[1]] = Some(lhs_last + rhs2);
        let adjoined = !self.adjoined.is_empty();
        for i in 2..self.j {
            let di = u[ix.d[i]];
            out[ix.d[i]] = Some(if !adjoined {
                lhs_last + 4.0 * di
            } else if i + 1 < self.j {
                lhs_last + di
            } else {
                let lam: f64 = ix.lambda.iter().map(|&l| u[l]).sum();
                lhs_last + di + lam
            });
        }
        out
    }

    /// Linear map u ↦ closed_form(u) as a matrix.
    pub fn closed_form_matrix(&self) -> Mat {
        let n = self.len();
        let mut l = Mat::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            for (r, v) in self.closed_form(&e).into_iter().enumerate() {
                l[(r, c)] = v;
            }
        }
        l
    }
}

struct Component {
    slots: Vec<(usize, Mat)>,
    block: usize,
}

struct Layout {
    p: usize,
    q: usize,
    /// (offset, size) of each diagonal block.
    blocks: Vec<(usize, usize)>,
    /// In component order.
    components: Vec<Component>,
}

fn soliton_parts() -> (Mat, Mat) {
    let a = block_diag(&[j_matrix(), Mat::zeros(1, 1)]);
    let b = block_diag(&[Mat::zeros(1, 1), j_matrix()]);
    (a, b)
}

fn layout(w: &WPoint) -> Result<Layout> {
    w.check_shape()?;
    let mut blocks = Vec::new();
    let mut comps = Vec::new();
    let mut off = 0;
    let mut push_block = |size: usize, blocks: &mut Vec<(usize, usize)>| {
        blocks.push((off, size));
        off += size;
        blocks.len() - 1
    };
    let head = push_block(2 * w.k, &mut blocks);
    comps.push(Component {
        slots: vec![(0, block_diag(&vec![j_matrix(); w.k]))],
        block: head,
    });
    for _ in 0..w.n - 1 {
        let bl = push_block(4, &mut blocks);
        comps.push(Component { slots: vec![(0, b_matrix(1))], block: bl });
        comps.push(Component { slots: vec![(1, b_matrix(2))], block: bl });
    }
    let soliton = |blocks: &mut Vec<(usize, usize)>, comps: &mut Vec<Component>, push: &mut dyn FnMut(usize, &mut Vec<(usize, usize)>) -> usize| {
        let bl = push(3, blocks);
        let (a, b) = soliton_parts();
        comps.push(Component { slots: vec![(0, a)], block: bl });
        comps.push(Component { slots: vec![(1, b)], block: bl });
    };
    if w.soliton == SolitonPlacement::AfterHead {
        soliton(&mut blocks, &mut comps, &mut push_block);
    }
    let last = push_block(4, &mut blocks);
    for i in 0..w.j {
        comps.push(Component {
            slots: vec![(i, b_matrix(i + 1))],
            block: last,
        });
    }
    if w.soliton == SolitonPlacement::Tail {
        soliton(&mut blocks, &mut comps, &mut push_block);
    }
    let mut slot = w.j;
    for a in &w.adjoined {
        let bl = push_block(a.d.q(), &mut blocks);
        comps.push(Component {
            slots: vec![(w.j - 1, a.d.mat(0).clone())],
            block: bl,
        });
        let mut rest = Vec::new();
        for m in &a.d.mats()[1..] {
            rest.push((slot, m.clone()));
            slot += 1;
        }
        comps.push(Component { slots: rest, block: bl });
    }
    Ok(Layout {
        p: slot,
        q: off,
        blocks,
        components: comps,
    })
}

fn component_tensor(lay: &Layout, comp: &Component, coef: f64) -> StructureTensor {
    let mut mats = vec![Mat::zeros(lay.q, lay.q); lay.p];
    let (off, size) = lay.blocks[comp.block];
    for (slot, m) in &comp.slots {
        let mut v = mats[*slot].view_mut((off, off), (size, size));
        v += m * coef;
    }
    StructureTensor::from_skew(lay.q, mats)
}

/// Assembles the block tensor of a W point.
pub fn w_point_tensor(w: &WPoint) -> Result<StructureTensor> {
    let lay = layout(w)?;
    let coefs = w.coefficients();
    let mut mats = vec![Mat::zeros(lay.q, lay.q); lay.p];
    for (comp, &coef) in lay.components.iter().zip(&coefs) {
        let (off, size) = lay.blocks[comp.block];
        for (slot, m) in &comp.slots {
            let mut v = mats[*slot].view_mut((off, off), (size, size));
            v += m * coef;
        }
    }
    Ok(StructureTensor::from_skew(lay.q, mats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HDetectionReport {
    pub passed: bool,
    pub first_violation: Option<String>,
    /// Largest |m₁| entry outside the diagonal blocks (must be exactly 0).
    pub max_offblock_m1: f64,
    /// Largest |m₂| off-diagonal entry that must vanish exactly.
    pub max_offdiag_m2: f64,
    /// Largest relative deviation of block entries from the closed form.
    pub max_block_deviation: f64,
    /// m₂ diagonal predicted by the closed form.
    pub expected_m2_diagonal: Vec<f64>,
    /// m₂ diagonal from the reference block form, evaluated literally
    /// (absent for soliton variants).
    pub displayed_m2_diagonal: Option<Vec<f64>>,
    pub displayed_matches: Option<bool>,
}

const BLOCK_REL_TOL: f64 = 1e-12;

fn is_integral(t: &StructureTensor) -> bool {
    t.mats().iter().all(|m| m.iter().all(|x| x.fract() == 0.0))
}

/// Checks that m(w) lies in the Lie algebra of H: m₁ block-scalar (per the closed
/// form) with exact zeros off the blocks, and m₂ diagonal with exact zeros off it.
pub fn h_detection_check(w: &WPoint) -> Result<HDetectionReport> {
    let lay = layout(w)?;
    let t = w_point_tensor(w)?;
    let m = moment(&t);
    let shape = w.shape();
    let u: Vec<f64> = w.coefficients().iter().map(|x| x * x).collect();
    let ix = shape.index();

    // Expected m₁ diagonal per block.
    let mut expect = vec![0.0; lay.q];
    let mut exact_block = vec![true; lay.blocks.len()];
    let fill = |expect: &mut Vec<f64>, block: usize, vals: &[f64]| {
        let (off, size) = lay.blocks[block];
        for i in 0..size {
            expect[off + i] = vals[if vals.len() == 1 { 0 } else { i }];
        }
    };
    let mut bi = 0;
    fill(&mut expect, bi, &[2.0 * u[ix.a]]);
    bi += 1;
    for i in 0..w.n - 1 {
        fill(&mut expect, bi, &[2.0 * (u[ix.b[i]] + u[ix.c[i]])]);
        bi += 1;
    }
    let sol = |expect: &mut Vec<f64>, bi: usize| {
        let [e1, e2] = ix.e.expect("soliton present");
        fill(expect, bi, &[2.0 * u[e1], 2.0 * (u[e1] + u[e2]), 2.0 * u[e2]]);
    };
    if w.soliton == SolitonPlacement::AfterHead {
        sol(&mut expect, bi);
        bi += 1;
    }
    let sd: f64 = ix.d.iter().map(|&i| u[i]).sum();
    fill(&mut expect, bi, &[2.0 * sd]);
    bi += 1;
    if w.soliton == SolitonPlacement::Tail {
        sol(&mut expect, bi);
        bi += 1;
    }
    let mut integral_d = Vec::new();
    for (l, a) in shape.adjoined.iter().enumerate() {
        let kappa = 2.0 * u[ix.lambda[l]] + u[ix.mu[l]] * (a.rho - 2.0);
        fill(&mut expect, bi, &[kappa]);
        let integral = is_integral(&w.adjoined[l].d);
        exact_block[bi] = integral;
        integral_d.push(integral);
        bi += 1;
    }

    let block_of = {
        let mut v = vec![0; lay.q];
        for (b, &(off, size)) in lay.blocks.iter().enumerate() {
            for x in v.iter_mut().skip(off).take(size) {
                *x = b;
            }
        }
        v
    };

    let mut first: Option<String> = None;
    let note = |msg: String, first: &mut Option<String>| {
        if first.is_none() {
            *first = Some(msg);
        }
    };
    let scale1 = linalg::max_abs(&m.m1).max(f64::MIN_POSITIVE);
    let mut max_offblock = 0.0_f64;
    let mut max_dev = 0.0_f64;
    for a in 0..lay.q {
        for b in 0..lay.q {
            let v = m.m1[(a, b)];
            if block_of[a] != block_of[b] {
                max_offblock = max_offblock.max(v.abs());
                if v != 0.0 {
                    note(format!("m1[{a}][{b}] = {v:e} outside the block structure"), &mut first);
                }
            } else {
                let target = if a == b { expect[a] } else { 0.0 };
                let dev = (v - target).abs() / scale1;
                max_dev = max_dev.max(dev);
                let exact = exact_block[block_of[a]];
                if (exact && a != b && v != 0.0) || dev > BLOCK_REL_TOL {
                    note(format!("m1[{a}][{b}] = {v:e}, expected {target:e}"), &mut first);
                }
            }
        }
    }

    // Slots that touch a non-integral adjoined tuple get a tolerance on m₂.
    let mut soft_slot = vec![false; lay.p];
    {
        let mut slot = w.j;
        for (l, a) in shape.adjoined.iter().enumerate() {
            if !integral_d[l] {
                soft_slot[w.j - 1] = true;
                for s in soft_slot.iter_mut().skip(slot).take(a.p - 1) {
                    *s = true;
                }
            }
            slot += a.p - 1;
        }
    }
    let g = shape.m2_diagonal(&u);
    let scale2 = linalg::max_abs(&m.m2).max(f64::MIN_POSITIVE);
    let mut max_offdiag = 0.0_f64;
    for a in 0..lay.p {
        for b in 0..lay.p {
            let v = m.m2[(a, b)];
            if a == b {
                let dev = (v - g[a]).abs() / scale2;
                max_dev = max_dev.max(dev);
                if dev > BLOCK_REL_TOL {
                    note(format!("m2[{a}][{a}] = {v:e}, expected {:e}", g[a]), &mut first);
                }
            } else if soft_slot[a] && soft_slot[b] {
                let dev = v.abs() / scale2;
                max_dev = max_dev.max(dev);
                if dev > BLOCK_REL_TOL {
                    note(format!("m2[{a}][{b}] = {v:e} off the diagonal"), &mut first);
                }
            } else {
                max_offdiag = max_offdiag.max(v.abs());
                if v != 0.0 {
                    note(format!("m2[{a}][{b}] = {v:e} off the diagonal"), &mut first);
                }
            }
        }
    }

    let displayed = displayed_m2_diagonal(w, &shape, &u);
    let displayed_matches = displayed.as_ref().map(|d| {
        d.iter()
            .zip(&g)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()))
    });
    Ok(HDetectionReport {
        passed: first.is_none(),
        first_violation: first,
        max_offblock_m1: max_offblock,
        max_offdiag_m2: max_offdiag,
        max_block_deviation: max_dev,
        expected_m2_diagonal: g,
        displayed_m2_diagonal: displayed,
        displayed_matches,
    })
}

/// The reference m₂ block form. Without adjoined tuples it lists
/// 4(b₁²+…+b_n²+d₁²) and 4(c₁²+…+c_n²+d₂²) with b_n = d₁, c_n = d₂; with them it
/// lists 4Σbᵢ², 4Σcᵢ², 4d_j² + λ²‖D₁‖², μ²‖D₁‖².
fn displayed_m2_diagonal(w: &WPoint, shape: &WShape, u: &[f64]) -> Option<Vec<f64>> {
    if w.soliton != SolitonPlacement::None {
        return None;
    }
    let ix = shape.index();
    let mut g = shape.m2_diagonal(u);
    if shape.adjoined.is_empty() {
        g[0] += 4.0 * u[ix.d[0]];
        g[1] += 4.0 * u[ix.d[1]];
    } else {
        let mut slot = w.j;
        for (l, a) in shape.adjoined.iter().enumerate() {
            for _ in 1..a.p {
                g[slot] = u[ix.mu[l]] * a.s1;
                slot += 1;
            }
        }
    }
    Some(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub name: String,
    /// The reference expression evaluated literally, where one exists.
    pub displayed: Option<f64>,
    /// Closed form derived from the block structure.
    pub closed_form: f64,
    /// ⟨m(w)·X, X⟩/⟨X, X⟩ for the unit component X, via the moment module.
    pub from_moment: f64,
    /// Whether the reference expression agrees with `from_moment`.
    pub displayed_agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientValues {
    pub entries: Vec<CoefficientEntry>,
}

impl CoefficientValues {
    /// The authoritative values (moment recomputation).
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.from_moment).collect()
    }

    pub fn spread(&self) -> f64 {
        spread(&self.values())
    }

    pub fn get(&self, name: &str) -> Option<&CoefficientEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Largest relative gap between the closed form and the moment recomputation.
    pub fn closed_form_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| (e.closed_form - e.from_moment).abs() / (1.0 + e.from_moment.abs()))
            .fold(0.0, f64::max)
    }
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn moment_coefficients(lay: &Layout, m: &MomentImage) -> Vec<f64> {
    lay.components
        .iter()
        .map(|comp| {
            let x = component_tensor(lay, comp, 1.0);
            m.act(&x).inner(&x) / x.norm_sq()
        })
        .collect()
}

pub fn coefficient_values(w: &WPoint) -> Result<CoefficientValues> {
    let lay = layout(w)?;
    let t = w_point_tensor(w)?;
    let m = moment(&t);
    let shape = w.shape();
    let u: Vec<f64> = w.coefficients().iter().map(|x| x * x).collect();
    let closed = shape.closed_form(&u);
    let shown = shape.displayed(&u);
    let from_m = moment_coefficients(&lay, &m);
    let entries = shape
        .names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| CoefficientEntry {
            name,
            displayed: shown[i],
            closed_form: closed[i],
            from_moment: from_m[i],
            displayed_agrees: shown[i].map(|d| (d - from_m[i]).abs() <= 1e-10 * (1.0 + from_m[i].abs())),
        })
        .collect();
    Ok(CoefficientValues { entries })
}

/// A weighted sum of coefficient differences that equals a positive form on the
/// open stratum. If all coefficients were equal the sum would vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    /// (weight, index of minuend, index of subtrahend).
    pub terms: Vec<(f64, usize, usize)>,
    /// Coefficients of the positive form in u; every entry is ≥ 0.
    pub form: Vec<f64>,
    /// Index whose u-coefficient in the form is strictly positive.
    pub anchor: usize,
    pub sign: f64,
}

impl Identity {
    pub fn combination(&self, values: &[f64]) -> f64 {
        self.sign * self.terms.iter().map(|&(w, a, b)| w * (values[a] - values[b])).sum::<f64>()
    }

    pub fn form_value(&self, u: &[f64]) -> f64 {
        self.form.iter().zip(u).map(|(c, x)| c * x).sum()
    }

    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.0.abs()).sum()
    }

    /// Lower bound on spread/min(u) over the open stratum.
    pub fn ratio_floor(&self) -> f64 {
        self.form[self.anchor] / self.weight_sum()
    }
}

/// The identity for a non-Einstein W (concatenation with optional tail soliton
/// and adjoined tuples). Needs 2k ≥ 4n, and j ≥ 3 when tuples are adjoined.
pub fn concatenation_identity(shape: &WShape) -> Result<Identity> {
    if shape.soliton == SolitonPlacement::AfterHead {
        return Err(Error::Precondition("use j9_identity for the (j,9) shape".into()));
    }
    if 2 * shape.k < 4 * shape.n {
        return Err(Error::Precondition(format!("2k >= 4n fails: k={}, n={}", shape.k, shape.n)));
    }
    if !shape.adjoined.is_empty() && shape.j < 3 {
        return Err(Error::Precondition("adjoined tuples need j >= 3".into()));
    }
    let ix = shape.index();
    let (n, k) = (shape.n as f64, shape.k as f64);
    let mut terms = Vec::new();
    match ix.e {
        Some([e1, e2]) => {
            terms.push((2.0 * n, ix.d[0], ix.d[1]));
            terms.push((-n, e1, e2));
        }
        None => terms.push((n, ix.d[0], ix.d[1])),
    }
    for &b in &ix.b {
        terms.push((-k / 2.0, ix.a, b));
    }
    terms.push((-k / 2.0, ix.a, ix.d[0]));
    let mut form = vec![0.0; ix.len];
    for &b in ix.b.iter().chain(std::iter::once(&ix.d[0])) {
        form[b] = 4.0 * n + 2.0 * k;
    }
    for &c in ix.c.iter().chain(std::iter::once(&ix.d[1])) {
        form[c] = 2.0 * k - 4.0 * n;
    }
    for &d in &ix.d[2..] {
        form[d] = 2.0 * k;
    }
    Ok(Identity {
        terms,
        form,
        anchor: ix.d[0],
        sign: 1.0,
    })
}

/// The identity for the (j,9) shape, valid for j ≥ 3.
pub fn j9_identity(shape: &WShape) -> Result<Identity> {
    if shape.soliton != SolitonPlacement::AfterHead || shape.n != 1 || shape.k != 1 {
        return Err(Error::Precondition("not the (j,9) shape".into()));
    }
    if shape.j < 3 {
        return Err(Error::Precondition("the (j,9) identity needs j >= 3".into()));
    }
    let ix = shape.index();
    let [e1, e2] = ix.e.expect("soliton present");
    let m = (shape.j - 2) as f64;
    let mut terms = vec![
        (-2.0 - m / 3.0, ix.d[0], ix.a),
        (1.0 + 2.0 * m / 3.0, e1, ix.a),
        (-1.0 - m / 3.0, e2, ix.d[1]),
        (-1.0, ix.d[0], ix.d[1]),
    ];
    for &d in &ix.d[2..] {
        terms.push((1.0, d, ix.d[0]));
    }
    let mut form = vec![0.0; ix.len];
    form[ix.d[0]] = 8.0 + 4.0 * m;
    form[ix.a] = 10.0 * m / 3.0 - 2.0;
    Ok(Identity {
        terms,
        form,
        anchor: ix.d[0],
        sign: -1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NonDistinguished,
    Distinguished,
    Indecomposable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub value: f64,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Condition {
    pub fn new(name: impl Into<String>, value: f64, satisfied: bool) -> Self {
        Self {
            name: name.into(),
            value,
            satisfied,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub conditions: Vec<Condition>,
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Random W points for the H-detection and identity replay.
    pub samples: usize,
    /// Multi-start count for the spread evidence.
    pub starts: usize,
    /// Evidence floor on min spread/min(coefficient²).
    pub floor: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 16,
            starts: 32,
            floor: 1e-4,
            seed: 0x5eed_cafe,
        }
    }
}

/// Result of the multi-start search for the smallest scale-free spread
/// (max − min of the coefficients) / min(coefficient²) on the open stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadEvidence {
    pub best_ratio: f64,
    /// Squared coefficients at the best point, normalized to sum 1.
    pub best_point: Vec<f64>,
    pub starts: usize,
}

fn ratio(l: &Mat, u: &[f64]) -> f64 {
    let e: Vec<f64> = (0..l.nrows()).map(|r| (0..u.len()).map(|c| l[(r, c)] * u[c]).sum()).collect();
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    spread(&e) / umin
}

/// β-smoothed max (sign = 1) or min (sign = −1) and its weights.
fn soft_extreme(v: &[f64], beta: f64, sign: f64) -> (f64, Vec<f64>) {
    let scale = v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let b = beta / scale.max(f64::MIN_POSITIVE);
    let top = v.iter().map(|x| sign * x).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (b * (sign * x - top)).exp()).collect();
    let z: f64 = w.iter().sum();
    let val = sign * (top + z.ln() / b);
    (val, w.into_iter().map(|x| x / z).collect())
}

fn smoothed(l: &Mat, z: &[f64], beta: f64) -> (f64, Vec<f64>) {
    let n = z.len();
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = z.iter().map(|x| (x - zmax).exp()).collect();
    let tot: f64 = ex.iter().sum();
    let u: Vec<f64> = ex.iter().map(|x| x / tot).collect();
    let e: Vec<f64> = (0..n).map(|r| (0..n).map(|c| l[(r, c)] * u[c]).sum()).collect();
    let (smax, wmax) = soft_extreme(&e, beta, 1.0);
    let (smin, wmin) = soft_extreme(&e, beta, -1.0);
    let (umin, wu) = soft_extreme(&u, beta, -1.0);
    let num = smax - smin;
    let f = num / umin;
    // dF/du
    let g: Vec<f64> = (0..n)
        .map(|c| {
            let dnum: f64 = (0..n).map(|r| l[(r, c)] * (wmax[r] - wmin[r])).sum();
            (dnum * umin - num * wu[c]) / (umin * umin)
        })
        .collect();
    let ug: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
    let gz = u.iter().zip(&g).map(|(a, b)| a * (b - ug)).collect();
    (f, gz)
}

fn to_u(z: &[f64]) -> Vec<f64> {
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = z.iter().map(|x| (x - zmax).exp()).collect();
    let tot: f64 = ex.iter().sum();
    ex.iter().map(|x| x / tot).collect()
}

/// Multi-start smoothed descent in log coordinates; every start is seeded from
/// `seed` and its index, and starts run in parallel.
pub fn minimize_spread(shape: &WShape, starts: usize, seed: u64) -> SpreadEvidence {
    let l = shape.closed_form_matrix();
    let n = shape.len();
    let results: Vec<(f64, Vec<f64>)> = (0..starts.max(1))
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let mut z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut best = (ratio(&l, &to_u(&z)), to_u(&z));
            for &beta in &[20.0, 80.0, 320.0, 1280.0, 5120.0] {
                let mut step = 0.5;
                for _ in 0..200 {
                    let (f, g) = smoothed(&l, &z, beta);
                    let gn: f64 = g.iter().map(|x| x * x).sum();
                    if gn < 1e-24 {
                        break;
                    }
                    let mut accepted = false;
                    for _ in 0..40 {
                        let trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                        let (ft, _) = smoothed(&l, &trial, beta);
                        if ft.is_finite() && ft <= f - 1e-4 * step * gn {
                            z = trial;
                            accepted = true;
                            step *= 2.0;
                            break;
                        }
                        step *= 0.5;
                    }
                    if !accepted {
                        break;
                    }
                    let u = to_u(&z);
                    let r = ratio(&l, &u);
                    if r < best.0 {
                        best = (r, u);
                    }
                }
            }
            best
        })
        .collect();
    let (best_ratio, best_point) = results
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one start");
    SpreadEvidence {
        best_ratio,
        best_point,
        starts: starts.max(1),
    }
}

/// Certificate that no point of the family's open stratum is distinguished.
pub fn non_einstein_certificate(spec: &FamilySpec, opts: &CertifyOptions) -> Result<Certificate> {
    match spec.kind {
        FamilyKind::NonEinstein | FamilyKind::AdjoinedNonEinstein | FamilyKind::J9 => {}
        other => {
            return Err(Error::InvalidFamily(format!(
                "non-Einstein certificates cover NonEinstein, AdjoinedNonEinstein and J9, not {other:?}"
            )))
        }
    }
    spec.validate()?;
    let mut conds = Vec::new();
    let mut notes = Vec::new();
    let (p, q) = spec.type_pq()?;
    conds.push(Condition::new("type (p,q)", (p * 1000 + q) as f64, true).with_detail(format!("({p}, {q})")));

    let gate_name;
    let gate_ok;
    if spec.kind == FamilyKind::J9 {
        gate_name = "j >= 3";
        gate_ok = spec.j >= 3;
        conds.push(Condition::new(gate_name, spec.j as f64, gate_ok));
        notes.push("the (j,9) tensors use B_i in so(4), since 2 + 3 + 4 = 9".into());
    } else {
        gate_name = "2k >= 4n+d";
        gate_ok = spec.certificate_precondition();
        conds.push(
            Condition::new(gate_name, (2 * spec.k) as f64 - (4 * spec.n + spec.d) as f64, gate_ok)
                .with_detail(format!("2k = {}, 4n+d = {}", 2 * spec.k, 4 * spec.n + spec.d)),
        );
        if spec.kind == FamilyKind::AdjoinedNonEinstein {
            conds.push(Condition::new("adjoined: j >= 3", spec.j as f64, spec.j >= 3));
            let q1 = 2 * spec.k + 4 * spec.n + spec.d;
            conds.push(Condition::new("adjoined: q1 >= 8", q1 as f64, q1 >= 8));
        }
    }

    let base = WPoint::from_spec(spec)?;
    let built = build_family(spec)?;
    let wt = w_point_tensor(&base)?;
    let diff = built.max_abs_diff(&wt).unwrap_or(f64::INFINITY);
    conds.push(Condition::new("family tensor lies in W", diff, diff == 0.0));

    let shape = base.shape();
    let identity = if spec.kind == FamilyKind::J9 {
        j9_identity(&shape)
    } else {
        concatenation_identity(&shape)
    };
    let gates_pass = conds.iter().all(|c| c.satisfied);
    let identity = match identity {
        Ok(id) if gates_pass => id,
        Ok(_) => {
            return Ok(Certificate {
                verdict: Verdict::Inconclusive,
                conditions: conds,
                family: Some(spec.clone()),
                notes,
            })
        }
        Err(e) => {
            conds.push(Condition::new("elimination identity available", 0.0, false).with_detail(e.to_string()));
            return Ok(Certificate {
                verdict: Verdict::Inconclusive,
                conditions: conds,
                family: Some(spec.clone()),
                notes,
            });
        }
    };

    // (a) H-detection, and (b) the identity replayed, on seeded samples of W.
    let samples: Vec<WPoint> = {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut v = vec![base.clone()];
        v.extend((0..opts.samples).map(|_| base.randomized(&mut rng)));
        v
    };
    struct SampleOut {
        h_ok: bool,
        closed_err: f64,
        identity_err: f64,
        form_ratio: f64,
        residual: f64,
        spread: f64,
    }
    let outs: Vec<SampleOut> = samples
        .par_iter()
        .map(|w| -> Result<SampleOut> {
            let h = h_detection_check(w)?;
            let cv = coefficient_values(w)?;
            let vals = cv.values();
            let u: Vec<f64> = w.coefficients().iter().map(|x| x * x).collect();
            let lhs = identity.combination(&vals);
            let rhs = identity.form_value(&u);
            let scale = vals.iter().map(|x| x.abs()).fold(0.0, f64::max) * identity.weight_sum();
            let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(SampleOut {
                h_ok: h.passed,
                closed_err: cv.closed_form_error(),
                identity_err: (lhs - rhs).abs() / scale,
                form_ratio: rhs / umin,
                residual: distinguished_report(&w_point_tensor(w)?)?.residual,
                spread: cv.spread(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let h_pass = outs.iter().filter(|o| o.h_ok).count();
    conds.push(
        Condition::new("H-detection on sampled W", h_pass as f64, h_pass == outs.len())
            .with_detail(format!("{h_pass}/{} points with exact structural zeros", outs.len())),
    );
    let cerr = outs.iter().map(|o| o.closed_err).fold(0.0, f64::max);
    conds.push(Condition::new("closed-form coefficients match moment", cerr, cerr < 1e-10));
    let ierr = outs.iter().map(|o| o.identity_err).fold(0.0, f64::max);
    conds.push(
        Condition::new("elimination identity replayed", ierr, ierr < 1e-10)
            .with_detail(identity_description(&identity, &shape)),
    );
    let fmin = outs.iter().map(|o| o.form_ratio).fold(f64::INFINITY, f64::min);
    conds.push(
        Condition::new("positive form on open stratum", fmin, fmin > 0.0 && identity.form.iter().all(|&c| c >= 0.0))
            .with_detail(format!(
                "every form coefficient is >= 0 and the {} coefficient is {}",
                shape.names()[identity.anchor],
                identity.form[identity.anchor]
            )),
    );
    let rmin = outs.iter().map(|o| o.residual).fold(f64::INFINITY, f64::min);
    conds.push(Condition::new("sampled residuals positive", rmin, rmin > 0.0));
    let smin = outs.iter().map(|o| o.spread).fold(f64::INFINITY, f64::min);
    conds.push(Condition::new("sampled coefficient spread positive", smin, smin > 0.0));

    // (c) Evidence: multi-start minimization of the scale-free spread.
    let ev = minimize_spread(&shape, opts.starts, opts.seed);
    conds.push(
        Condition::new("spread evidence above floor", ev.best_ratio, ev.best_ratio > opts.floor).with_detail(format!(
            "min spread/min(u) over {} starts; the identity bounds it below by {}",
            ev.starts,
            identity.ratio_floor()
        )),
    );

    let verdict = if conds.iter().all(|c| c.satisfied) {
        Verdict::NonDistinguished
    } else {
        Verdict::Inconclusive
    };
    Ok(Certificate {
        verdict,
        conditions: conds,
        family: Some(spec.clone()),
        notes,
    })
}

fn identity_description(id: &Identity, shape: &WShape) -> String {
    let names = shape.names();
    let lhs: Vec<String> = id
        .terms
        .iter()
        .map(|&(w, a, b)| format!("{w:+}*(E[{}]-E[{}])", names[a], names[b]))
        .collect();
    let rhs: Vec<String> = id
        .form
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| format!("{c}*{}^2", names[i]))
        .collect();
    let sign = if id.sign < 0.0 { "-" } else { "" };
    format!("{sign}[{}] = {}", lhs.join(" "), rhs.join(" + "))
}

/// Invariants of C[t] under the block-rescaling group H and beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitInvariant {
    /// Canonical form under H; with t_n = 1 pinned this is t itself.
    pub h_canonical: Vec<f64>,
    /// |t| sorted ascending: sign flips and swaps of middle blocks are in G.
    pub g_canonical: Vec<f64>,
    /// Sign patterns g = diag(±1) on one middle block with g·(B₁,B₂)·gᵀ = (s₁B₁, s₂B₂).
    pub sign_patterns: Vec<SignPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    pub diagonal: [i8; 4],
    pub s1: i8,
    pub s2: i8,
}

/// All 16 diagonal sign matrices on R⁴, with their effect on (B₁, B₂).
pub fn sign_search() -> Vec<SignPattern> {
    let b1 = b_matrix(1);
    let b2 = b_matrix(2);
    let mut out = Vec::new();
    for bits in 0..16u8 {
        let diag: [i8; 4] = std::array::from_fn(|i| if bits >> i & 1 == 1 { -1 } else { 1 });
        let g = Mat::from_diagonal(&nalgebra::DVector::from_iterator(4, diag.iter().map(|&x| x as f64)));
        let c1 = &g * &b1 * &g;
        let c2 = &g * &b2 * &g;
        let s1 = if c1 == b1 { 1 } else if c1 == -&b1 { -1 } else { 0 };
        let s2 = if c2 == b2 { 1 } else if c2 == -&b2 { -1 } else { 0 };
        if s1 != 0 && s2 != 0 {
            out.push(SignPattern { diagonal: diag, s1, s2 });
        }
    }
    out
}

/// The group element flipping the sign of t_i (0-based middle index).
pub fn sign_flip_element(spec: &FamilySpec, i: usize) -> Result<GroupElement> {
    if spec.kind != FamilyKind::NonEinstein || i + 1 >= spec.n.max(1) {
        return Err(Error::Precondition("sign flips act on the middle tuples of a NonEinstein family".into()));
    }
    let (p, q) = spec.type_pq()?;
    let pat = sign_search()
        .into_iter()
        .find(|s| s.s1 == -1 && s.s2 == 1)
        .expect("a flipping pattern exists");
    let mut g = Mat::identity(q, q);
    let off = 2 * spec.k + 4 * i;
    for (r, &s) in pat.diagonal.iter().enumerate() {
        g[(off + r, off + r)] = s as f64;
    }
    GroupElement::new(g, Mat::identity(p, p))
}

pub fn orbit_separation_invariant(spec: &FamilySpec) -> Result<OrbitInvariant> {
    if spec.kind != FamilyKind::NonEinstein {
        return Err(Error::InvalidFamily("orbit separation is defined for NonEinstein families".into()));
    }
    spec.validate()?;
    if spec.n < 2 {
        return Err(Error::Precondition("orbit separation needs n >= 2".into()));
    }
    Ok(OrbitInvariant {
        h_canonical: spec.t.clone(),
        g_canonical: {
            let mut v: Vec<f64> = spec.t.iter().map(|x| x.abs()).collect();
            v.sort_by(f64::total_cmp);
            v
        },
        sign_patterns: sign_search(),
    })
}

/// The permutation of R^q exchanging middle tuples i and j (0-based); it maps
/// C[t] to C[t with t_i and t_j swapped].
pub fn block_swap_element(spec: &FamilySpec, i: usize, j: usize) -> Result<GroupElement> {
    if spec.kind != FamilyKind::NonEinstein || i.max(j) + 1 >= spec.n.max(1) {
        return Err(Error::Precondition("block swaps act on the middle tuples of a NonEinstein family".into()));
    }
    let (p, q) = spec.type_pq()?;
    let mut g = Mat::identity(q, q);
    let (oi, oj) = (2 * spec.k + 4 * i, 2 * spec.k + 4 * j);
    if i != j {
        for r in 0..4 {
            g[(oi + r, oi + r)] = 0.0;
            g[(oj + r, oj + r)] = 0.0;
            g[(oi + r, oj + r)] = 1.0;
            g[(oj + r, oi + r)] = 1.0;
        }
    }
    GroupElement::new(g, Mat::identity(p, p))
}

/// Applies the sign flip of t_i to the family tensor; returns the image.
pub fn apply_sign_flip(spec: &FamilySpec, i: usize) -> Result<StructureTensor> {
    let e = sign_flip_element(spec, i)?;
    group_act(&e, &build_family(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::build_minimal_d;

    fn spec(j: usize, k: usize, n: usize, d: usize) -> FamilySpec {
        FamilySpec::non_einstein(j, k, n, d)
    }

    #[test]
    fn ones_point_matches_family() {
        for s in [spec(2, 2, 1, 0), spec(3, 4, 2, 0).with_t(vec![1.5]), spec(4, 5, 1, 3), FamilySpec::j9(4)] {
            let w = WPoint::from_spec(&s).unwrap();
            assert_eq!(w_point_tensor(&w).unwrap(), build_family(&s).unwrap());
        }
        let s = FamilySpec::adjoined(spec(3, 4, 1, 0), vec![FamilySpec::minimal_d(4, 6)]);
        let w = WPoint::from_spec(&s).unwrap();
        assert_eq!(w_point_tensor(&w).unwrap(), build_family(&s).unwrap());
    }

    #[test]
    fn doubled_head() {
        let mut w = WPoint::from_spec(&spec(2, 2, 1, 0)).unwrap();
        w.a1 = 2.0;
        let t = w_point_tensor(&w).unwrap();
        assert_eq!(t.mat(0)[(0, 1)], 2.0);
        assert_eq!(t.mat(0)[(2, 3)], 2.0);
        assert_eq!(t.mat(0)[(4, 5)], 1.0);
        w.d[0] = 0.0;
        assert!(!w.in_open_stratum());
        assert!(w_point_tensor(&w).is_ok());
    }

    #[test]
    fn coefficient_values_at_ones() {
        let w = WPoint::from_spec(&spec(2, 2, 1, 0)).unwrap();
        let cv = coefficient_values(&w).unwrap();
        let v = cv.values();
        assert_eq!(v, vec![12.0, 16.0, 12.0]);
        assert!(cv.entries.iter().all(|e| e.displayed_agrees == Some(true)));
        assert!(distinguished_report(&w_point_tensor(&w).unwrap()).unwrap().residual > 0.01);
    }

    #[test]
    fn displayed_gram_double_counts() {
        let w = WPoint::from_spec(&spec(2, 2, 1, 0)).unwrap();
        let h = h_detection_check(&w).unwrap();
        assert!(h.passed);
        assert_eq!(h.expected_m2_diagonal, vec![8.0, 4.0]);
        assert_eq!(h.displayed_m2_diagonal, Some(vec![12.0, 8.0]));
        assert_eq!(h.displayed_matches, Some(false));
    }

    #[test]
    fn adjoined_tail_entries() {
        let s = FamilySpec::adjoined(spec(3, 4, 1, 0), vec![FamilySpec::minimal_d(4, 6)]);
        let w = WPoint::from_spec(&s).unwrap();
        let h = h_detection_check(&w).unwrap();
        assert!(h.passed, "{:?}", h.first_violation);
        let g = &h.expected_m2_diagonal;
        assert_eq!(g.len(), 8);
        assert!(g[3..].iter().all(|&x| x == 4.0));
        let m = moment(&w_point_tensor(&w).unwrap());
        for i in 3..8 {
            assert_eq!(m.m2[(i, i)], 4.0);
        }
    }

    #[test]
    fn adjoined_display_disagrees_on_tail() {
        let s = FamilySpec::adjoined(spec(4, 4, 1, 0), vec![FamilySpec::minimal_d(4, 6)]);
        let cv = coefficient_values(&WPoint::from_spec(&s).unwrap()).unwrap();
        assert_eq!(cv.get("a1").unwrap().displayed_agrees, Some(true));
        assert_eq!(cv.get("d3").unwrap().displayed_agrees, Some(false));
        assert_eq!(cv.get("d4").unwrap().displayed_agrees, Some(false));
        assert_eq!(cv.get("lambda1").unwrap().displayed, None);
        assert!(cv.closed_form_error() < 1e-12);
    }

    #[test]
    fn general_minimal_d_is_detected_within_tolerance() {
        let d = build_minimal_d(6, 15).unwrap();
        let mut w = WPoint::from_spec(&spec(3, 2, 1, 0)).unwrap();
        w.adjoined.push(AdjoinedBlock { d, lambda: 0.7, mu: 1.3 });
        let h = h_detection_check(&w).unwrap();
        assert!(h.passed, "{:?}", h.first_violation);
        assert_eq!(h.max_offblock_m1, 0.0);
        assert!(coefficient_values(&w).unwrap().closed_form_error() < 1e-12);
    }

    #[test]
    fn homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WPoint::from_spec(&spec(3, 2, 2, 3).with_t(vec![0.5])).unwrap().randomized(&mut rng);
        let v = coefficient_values(&w).unwrap().values();
        let mut w2 = w.clone();
        w2.a1 *= 2.0;
        w2.b.iter_mut().chain(w2.c.iter_mut()).chain(w2.d.iter_mut()).for_each(|x| *x *= 2.0);
        w2.e = [w.e[0] * 2.0, w.e[1] * 2.0];
        let v2 = coefficient_values(&w2).unwrap().values();
        for (a, b) in v.iter().zip(&v2) {
            assert!((b - 4.0 * a).abs() < 1e-12 * b.abs());
        }
    }

    #[test]
    fn identity_holds_symbolically_on_units() {
        for (j, k, n, d) in [(2, 2, 1, 0), (3, 4, 2, 0), (5, 7, 2, 3), (6, 6, 3, 0)] {
            let s = spec(j, k, n, d);
            let shape = WPoint::from_spec(&s).unwrap().shape();
            let id = concatenation_identity(&shape).unwrap();
            let l = shape.closed_form_matrix();
            for c in 0..shape.len() {
                let col: Vec<f64> = (0..shape.len()).map(|r| l[(r, c)]).collect();
                assert!((id.combination(&col) - id.form[c]).abs() < 1e-12, "{j} {k} {n} {d} col {c}");
            }
        }
        for j in 3..=6 {
            let shape = WPoint::from_spec(&FamilySpec::j9(j)).unwrap().shape();
            let id = j9_identity(&shape).unwrap();
            let l = shape.closed_form_matrix();
            for c in 0..shape.len() {
                let col: Vec<f64> = (0..shape.len()).map(|r| l[(r, c)]).collect();
                assert!((id.combination(&col) - id.form[c]).abs() < 1e-12, "j9 {j} col {c}");
            }
        }
    }

    #[test]
    fn certificate_examples() {
        let opts = CertifyOptions { samples: 4, starts: 8, ..Default::default() };
        let c = non_einstein_certificate(&spec(2, 2, 1, 0), &opts).unwrap();
        assert_eq!(c.verdict, Verdict::NonDistinguished, "{:#?}", c.conditions);
        let c = non_einstein_certificate(&spec(4, 1, 1, 0), &opts).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        let s = FamilySpec::adjoined(spec(3, 4, 1, 0), vec![FamilySpec::minimal_d(4, 6)]);
        let c = non_einstein_certificate(&s, &opts).unwrap();
        assert_eq!(c.verdict, Verdict::NonDistinguished, "{:#?}", c.conditions);
        assert!(non_einstein_certificate(&FamilySpec::soliton(), &opts).is_err());
    }

    #[test]
    fn sign_flip_identifies_negated_t() {
        let s = spec(2, 4, 2, 0).with_t(vec![1.5]);
        let flipped = apply_sign_flip(&s, 0).unwrap();
        assert_eq!(flipped, build_family(&spec(2, 4, 2, 0).with_t(vec![-1.5])).unwrap());
        let inv = orbit_separation_invariant(&s).unwrap();
        let neg = orbit_separation_invariant(&spec(2, 4, 2, 0).with_t(vec![-1.5])).unwrap();
        assert_ne!(inv.h_canonical, neg.h_canonical);
        assert_eq!(inv.g_canonical, neg.g_canonical);
        assert!(orbit_separation_invariant(&spec(2, 2, 1, 0)).is_err());
    }

    #[test]
    fn block_swap_permutes_t() {
        let s = spec(3, 6, 3, 0).with_t(vec![0.5, 2.0]);
        let e = block_swap_element(&s, 0, 1).unwrap();
        let swapped = group_act(&e, &build_family(&s).unwrap()).unwrap();
        let target = spec(3, 6, 3, 0).with_t(vec![2.0, 0.5]);
        assert_eq!(swapped, build_family(&target).unwrap());
        assert_eq!(
            orbit_separation_invariant(&s).unwrap().g_canonical,
            orbit_separation_invariant(&target).unwrap().g_canonical
        );
    }
}
