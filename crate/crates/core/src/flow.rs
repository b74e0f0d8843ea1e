//! Normalized gradient flow of ‖m(C)‖²/‖C‖⁴ on the unit sphere.
//!
//! The outcome is evidence only: a limit of the flow lies in the orbit closure,
//! and a limit outside the orbit without a rank drop is not detected.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::moment::{moment, MomentImage};
use crate::tensor::{dim_so, StructureTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Relative component-span singular value below which the flow stops.
    pub rank_tol: f64,
    pub armijo: f64,
    /// Record the residual every this many iterations (0 disables).
    pub record_every: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200_000,
            initial_step: 0.01,
            backtrack: 0.5,
            max_halvings: 40,
            rank_tol: 1e-7,
            armijo: 1e-4,
            record_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowStatus {
    DistinguishedFound,
    Degenerated,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub status: FlowStatus,
    pub final_tensor: StructureTensor,
    pub residual: f64,
    pub r: f64,
    pub iterations: usize,
    /// Smallest relative singular value of the component span seen during the flow.
    pub min_rank_sigma: f64,
    /// Final value of ‖m‖²/‖C‖⁴.
    pub objective: f64,
    /// True if the line search could not decrease the objective and the flow stopped early.
    pub stalled: bool,
    /// Every accepted step decreased the objective.
    pub monotone: bool,
    pub trajectory: Vec<f64>,
}

/// Relative singular value of the component span, via the Gram matrix m₂.
fn rank_sigma(m2: &Mat) -> f64 {
    let ev = linalg::sym_eigenvalues(m2);
    let hi = ev.last().copied().unwrap_or(0.0);
    let lo = ev.first().copied().unwrap_or(0.0).max(0.0);
    if hi <= 0.0 {
        0.0
    } else {
        (lo / hi).sqrt()
    }
}

/// F(C′) − F(C) with F = ‖m‖²/‖C‖⁴, computed from Δ = C′ − C and S = C′ + C
/// so that small differences do not cancel.
fn objective_delta(c: &StructureTensor, mc: &MomentImage, cn: &StructureTensor, mn: &MomentImage) -> f64 {
    let (p, q) = (c.p(), c.q());
    let delta = cn.axpy(-1.0, c);
    let sum = cn.add(c);
    let mut dm1 = Mat::zeros(q, q);
    for (d, s) in delta.mats().iter().zip(sum.mats()) {
        let x = d * s.transpose();
        dm1 += &x + x.transpose();
    }
    let mut dm2 = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            dm2[(i, j)] = 0.5
                * (linalg::frob_inner(delta.mat(i), sum.mat(j)) + linalg::frob_inner(sum.mat(i), delta.mat(j)));
        }
    }
    let sm1 = &mn.m1 + &mc.m1;
    let sm2 = &mn.m2 + &mc.m2;
    let dmm = linalg::frob_inner(&dm1, &sm1) + linalg::frob_inner(&dm2, &sm2);
    let n = c.norm_sq();
    let nn = cn.norm_sq();
    let dn = delta.inner(&sum);
    let mm = mc.norm_sq();
    dmm / (nn * nn) - mm * dn * (n + nn) / (n * n * nn * nn)
}

pub fn flow_to_distinguished(c: &StructureTensor, opts: &FlowOptions) -> Result<FlowResult> {
    if c.norm_sq() == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let mut cur = c.normalized()?;
    let mut m = moment(&cur);
    let mut min_sigma = f64::INFINITY;
    let mut trajectory = Vec::new();
    let mut monotone = true;
    let mut it = 0;
    loop {
        let n2 = cur.norm_sq();
        let w = m.act(&cur);
        let r = w.inner(&cur) / n2;
        let g = w.axpy(-r, &cur);
        let mnorm = m.norm();
        let residual = g.norm() / (n2.sqrt() * mnorm);
        if !residual.is_finite() {
            return Err(Error::FlowNonFinite(it));
        }
        let sigma = rank_sigma(&m.m2);
        min_sigma = min_sigma.min(sigma);
        if opts.record_every > 0 && it % opts.record_every == 0 {
            trajectory.push(residual);
        }
        let finish = |status, stalled, cur: StructureTensor, trajectory| FlowResult {
            status,
            residual,
            r,
            iterations: it,
            min_rank_sigma: min_sigma,
            objective: m.norm_sq() / (n2 * n2),
            stalled,
            monotone,
            trajectory,
            final_tensor: cur,
        };
        if sigma < opts.rank_tol {
            return Ok(finish(FlowStatus::Degenerated, false, cur, trajectory));
        }
        if residual < opts.tol {
            return Ok(finish(FlowStatus::DistinguishedFound, false, cur, trajectory));
        }
        if it >= opts.max_iter {
            return Ok(finish(FlowStatus::MaxIterations, false, cur, trajectory));
        }
        let slope = 4.0 * g.norm_sq() / (n2 * n2);
        let mut eta = opts.initial_step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = cur.axpy(-eta, &g);
            let tn = trial.norm();
            if !tn.is_finite() || tn == 0.0 {
                return Err(Error::FlowNonFinite(it));
            }
            let trial = trial.scaled(1.0 / tn);
            let mt = moment(&trial);
            let df = objective_delta(&cur, &m, &trial, &mt);
            if !df.is_finite() {
                return Err(Error::FlowNonFinite(it));
            }
            if df <= -opts.armijo * eta * slope {
                accepted = Some((trial, mt, df));
                break;
            }
            eta *= opts.backtrack;
        }
        match accepted {
            Some((trial, mt, df)) => {
                monotone &= df <= 0.0;
                debug_assert!(df <= 0.0);
                cur = trial;
                m = mt;
            }
            None => return Ok(finish(FlowStatus::MaxIterations, true, cur, trajectory)),
        }
        it += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub status: FlowStatus,
    pub residual: f64,
    pub iterations: usize,
    pub min_rank_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub p: usize,
    pub q: usize,
    pub trials: usize,
    pub seed: u64,
    pub fraction_distinguished: f64,
    pub distinguished: usize,
    pub degenerated: usize,
    pub max_iterations: usize,
    pub outcomes: Vec<TrialOutcome>,
    /// Decade bins of the final residual; the first bin collects exact zeros and
    /// everything below 1e-18.
    pub histogram: Vec<HistogramBin>,
}

fn histogram(residuals: &[f64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = std::iter::once(HistogramBin { lo: 0.0, hi: 1e-18, count: 0 })
        .chain((-18..=0).map(|e| HistogramBin {
            lo: 10f64.powi(e),
            hi: 10f64.powi(e + 1),
            count: 0,
        }))
        .collect();
    for &r in residuals {
        let idx = bins.iter().position(|b| r < b.hi).unwrap_or(bins.len() - 1);
        bins[idx].count += 1;
    }
    bins
}

/// Flows `trials` Gaussian tensors of type (p, q). Trial i draws from the
/// ChaCha8 stream i of `seed`, so results do not depend on the thread count.
pub fn scan_generic(p: usize, q: usize, trials: usize, seed: u64, opts: &FlowOptions) -> Result<ScanSummary> {
    if q < 2 || p < 1 || p > dim_so(q) {
        return Err(Error::InvalidType {
            p,
            q,
            reason: format!("need 1 <= p <= {}", dim_so(q)),
        });
    }
    if trials < 1 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let c = StructureTensor::random(p, q, &mut rng)?;
            let res = flow_to_distinguished(&c, opts)?;
            Ok(TrialOutcome {
                status: res.status,
                residual: res.residual,
                iterations: res.iterations,
                min_rank_sigma: res.min_rank_sigma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |s| outcomes.iter().filter(|o| o.status == s).count();
    let distinguished = count(FlowStatus::DistinguishedFound);
    let residuals: Vec<f64> = outcomes.iter().map(|o| o.residual).collect();
    Ok(ScanSummary {
        p,
        q,
        trials,
        seed,
        fraction_distinguished: distinguished as f64 / trials as f64,
        distinguished,
        degenerated: count(FlowStatus::Degenerated),
        max_iterations: count(FlowStatus::MaxIterations),
        histogram: histogram(&residuals),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::heisenberg_j;

    #[test]
    fn already_distinguished_stops_at_zero() {
        let res = flow_to_distinguished(&heisenberg_j(2).unwrap(), &FlowOptions::default()).unwrap();
        assert_eq!(res.status, FlowStatus::DistinguishedFound);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.residual, 0.0);
    }

    #[test]
    fn zero_tensor_rejected() {
        let z = StructureTensor::zeros(2, 3).unwrap();
        assert_eq!(flow_to_distinguished(&z, &FlowOptions::default()).unwrap_err(), Error::ZeroTensor);
    }

    #[test]
    fn objective_delta_matches_direct_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = StructureTensor::random(2, 4, &mut rng).unwrap().normalized().unwrap();
        let b = StructureTensor::random(2, 4, &mut rng).unwrap().normalized().unwrap();
        let f = |c: &StructureTensor| moment(c).norm_sq() / c.norm_sq().powi(2);
        let direct = f(&b) - f(&a);
        let polar = objective_delta(&a, &moment(&a), &b, &moment(&b));
        assert!((direct - polar).abs() < 1e-13);
    }

    #[test]
    fn invalid_scan_type() {
        assert!(scan_generic(100, 4, 1, 0, &FlowOptions::default()).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[0.0, 5e-10, 0.5, 3.0]);
        assert_eq!(h[0].count, 1);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 4);
    }
}
