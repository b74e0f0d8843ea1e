//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nilsoliton::certification::{
    h_detection_check, non_einstein_certificate, orbit_separation_invariant, CertifyOptions, Verdict, WPoint,
};
use nilsoliton::constructions::{
    b_tuple, build_family, concat, heisenberg_j, rescale_match, soliton_23, standard_blocks,
    FamilySpec, StandardBlock,
};
use nilsoliton::flow::{flow_to_distinguished, scan_generic, FlowOptions, FlowStatus};
use nilsoliton::indecomposability::{decomposition_search, pencil_nonsingular, structural_criteria, SearchOptions};
use nilsoliton::moduli::{generic_moduli_dim, non_einstein_region, region_table, RegionLabel};
use nilsoliton::tensor::dim_so;
use nilsoliton::{distinguished_report, group_act, moment, moment_oracle, GroupElement, StructureTensor};

type Mat = DMatrix<f64>;

/// Observed minimum of spread/min(u) for (j,k,n,d) = (2,2,1,0); the elimination
/// identity gives the same value as a rigorous lower bound.
const SPREAD_RATIO_2210: f64 = 4.0;

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn block_pair(m: usize) -> StructureTensor {
    // (J^{⊕m} ⊕ 0, 0 ⊕ J^{⊕m}) in so(4m)².
    let q = 4 * m;
    let mut a = Mat::zeros(q, q);
    let mut b = Mat::zeros(q, q);
    for i in 0..m {
        a[(2 * i, 2 * i + 1)] = 1.0;
        a[(2 * i + 1, 2 * i)] = -1.0;
        let o = 2 * m + 2 * i;
        b[(o, o + 1)] = 1.0;
        b[(o + 1, o)] = -1.0;
    }
    StructureTensor::new(2, q, vec![a, b]).unwrap()
}

fn rotated(c: &StructureTensor, seed: u64) -> StructureTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = c.q();
    let x = Mat::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
    let o = x.qr().q();
    group_act(&GroupElement::new(o, Mat::identity(c.p(), c.p())).unwrap(), c).unwrap()
}

fn crit1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let p = rng.random_range(1..=4);
        let q = rng.random_range(2..=6);
        let c = StructureTensor::random(p, q, &mut rng).unwrap();
        let (a, b) = (moment(&c), moment_oracle(&c));
        let scale = a.m1.amax().max(a.m2.amax());
        let err = (&a.m1 - &b.m1).amax().max((&a.m2 - &b.m2).amax()) / scale;
        worst = worst.max(err);
    }
    check(worst <= 1e-10, format!("200 tensors, worst relative entry error {worst:.3e}"))
}

fn crit2() -> Outcome {
    let mut cases: Vec<(String, StructureTensor, f64)> =
        (1..=4).map(|k| (format!("heisenberg_J({k})"), heisenberg_j(k).unwrap(), (2 * k + 4) as f64)).collect();
    cases.push(("soliton_23".into(), soliton_23(), 8.0));
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, c, r) in cases {
        let rep = distinguished_report(&c).unwrap();
        let good = rep.residual < 1e-12 && (rep.r - r).abs() <= 1e-12 * r;
        ok &= good;
        parts.push(format!("{name}: r={} res={:.1e}", rep.r, rep.residual));
    }
    check(ok, parts.join(", "))
}

fn crit3() -> Outcome {
    let pool = [
        ("soliton_23", soliton_23()),
        ("(B1,B2)", b_tuple(2)),
        ("H(1)+H(1)", block_pair(1)),
        ("H(2)+H(2)", block_pair(2)),
        ("rotated (B1,B2)", rotated(&b_tuple(2), 3)),
    ];
    let mut worst = 0.0_f64;
    let mut pairs = 0;
    for (i, (_, a)) in pool.iter().enumerate() {
        for (j, (_, b)) in pool.iter().enumerate() {
            if i == j {
                continue;
            }
            let m = rescale_match(a, b).unwrap();
            let c = concat(a, &m.scaled).unwrap();
            worst = worst.max(distinguished_report(&c).unwrap().residual);
            pairs += 1;
        }
    }
    check(pairs == 20 && worst < 1e-8, format!("{pairs} pairs, worst residual {worst:.3e}"))
}

fn crit4() -> Outcome {
    let ne = |j, k, n| FamilySpec::non_einstein(j, k, n, 0);
    let shapes = [
        ("(k=2,n=1,j=2)", ne(2, 2, 1)),
        ("(k=2,n=2,j=3)", ne(3, 2, 2)),
        ("(k=4,n=2,j=6)", ne(6, 4, 2)),
        ("adjoined (k=4,n=2,j=3)+D(4,6)", FamilySpec::adjoined(ne(3, 4, 2), vec![FamilySpec::minimal_d(4, 6)])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = (0.0_f64, 0.0_f64);
    for (name, spec) in &shapes {
        let base = WPoint::from_spec(spec).unwrap();
        for i in 0..100 {
            let w = base.randomized(&mut rng);
            let rep = h_detection_check(&w).unwrap();
            worst.0 = worst.0.max(rep.max_offblock_m1);
            worst.1 = worst.1.max(rep.max_offdiag_m2);
            if !(rep.passed && rep.max_offblock_m1 == 0.0 && rep.max_offdiag_m2 == 0.0) {
                return check(false, format!("{name} point {i}: {:?}", rep.first_violation));
            }
        }
    }
    check(true, format!("400 points, off-block m1 max {:e}, off-diagonal m2 max {:e}", worst.0, worst.1))
}

fn crit5() -> Outcome {
    let mut specs = Vec::new();
    for j in 2..=6 {
        for n in 1..=3 {
            for d in [0usize, 3] {
                let k = (4 * n + d).div_ceil(2);
                specs.push(FamilySpec::non_einstein(j, k, n, d));
            }
        }
    }
    let opts = CertifyOptions::default();
    let mut failures = Vec::new();
    for s in &specs {
        let cert = non_einstein_certificate(s, &opts).unwrap();
        if cert.verdict != Verdict::NonDistinguished {
            failures.push(format!("(j={},k={},n={},d={})", s.j, s.k, s.n, s.d));
        }
    }
    let base = non_einstein_certificate(&FamilySpec::non_einstein(2, 2, 1, 0), &opts).unwrap();
    let ratio = base.condition("spread evidence above floor").map(|c| c.value).unwrap_or(f64::NAN);
    let regression = ratio > 1e-4 && ratio >= SPREAD_RATIO_2210 * (1.0 - 1e-9) && ratio <= SPREAD_RATIO_2210 * 1.01;
    check(
        failures.is_empty() && regression,
        format!(
            "{} certificates, {} not NonDistinguished {:?}; (2,2,1,0) spread ratio {ratio:.6} (frozen {SPREAD_RATIO_2210})",
            specs.len(),
            failures.len(),
            failures
        ),
    )
}

fn crit6() -> Outcome {
    let c = build_family(&FamilySpec::non_einstein(2, 2, 1, 0)).unwrap();
    let res = flow_to_distinguished(&c, &FlowOptions::default()).unwrap();
    let family_ok = res.status != FlowStatus::DistinguishedFound;
    let scan = scan_generic(2, 5, 50, 2024, &FlowOptions::default()).unwrap();
    let good = scan
        .outcomes
        .iter()
        .filter(|o| o.status == FlowStatus::DistinguishedFound && o.residual < 1e-8)
        .count();
    let frac = good as f64 / 50.0;
    check(
        family_ok && frac >= 0.9,
        format!(
            "family flow {:?} after {} iterations (residual {:.2e}); generic (2,5) fraction {frac:.2}",
            res.status, res.iterations, res.residual
        ),
    )
}

fn crit7() -> Outcome {
    let mut cases = vec![((1, 5), 0), ((2, 4), 0), ((2, 8), 1), ((2, 9), 0), ((3, 6), 2), ((4, 6), 9)];
    for q in 4..=8 {
        cases.push(((dim_so(q), q), 0));
    }
    let mut bad = Vec::new();
    for ((p, q), want) in &cases {
        let got = generic_moduli_dim(*p, *q).unwrap().dim;
        if got != *want {
            bad.push(format!("({p},{q}) gave {got}, expected {want}"));
        }
    }
    for p in 1..dim_so(6) {
        let a = generic_moduli_dim(p, 6).unwrap().dim;
        let b = generic_moduli_dim(dim_so(6) - p, 6).unwrap().dim;
        if a != b {
            bad.push(format!("dual mismatch at p={p}: {a} vs {b}"));
        }
    }
    check(bad.is_empty(), format!("{} table cases, dual symmetry at q=6; {:?}", cases.len(), bad))
}

fn indecomposability_specs() -> Vec<FamilySpec> {
    let mut v: Vec<FamilySpec> = (1..=4).map(FamilySpec::heisenberg).collect();
    v.push(FamilySpec::soliton());
    v.extend((1..=6).map(FamilySpec::b_blocks));
    for (q, p) in [(2, 1), (4, 5), (4, 6), (6, 14), (6, 15)] {
        v.push(FamilySpec::minimal_d(q, p));
    }
    for j in 2..=6 {
        for n in 1..=3 {
            for d in [0usize, 3] {
                v.push(FamilySpec::non_einstein(j, (4 * n + d).div_ceil(2), n, d));
            }
        }
    }
    for j in 3..=6 {
        v.push(FamilySpec::non_einstein(j, 1, 2, 0).with_t(vec![0.7]));
        v.push(FamilySpec::j9(j));
    }
    v.push(FamilySpec::non_einstein(3, 6, 3, 0).with_t(vec![0.5, -2.0]));
    v.push(FamilySpec::adjoined(FamilySpec::non_einstein(3, 4, 1, 0), vec![FamilySpec::minimal_d(4, 6)]));
    v.push(FamilySpec::adjoined(
        FamilySpec::non_einstein(4, 4, 2, 0),
        vec![FamilySpec::minimal_d(4, 5), FamilySpec::minimal_d(6, 15)],
    ));
    v
}

fn crit8() -> Outcome {
    let jk = standard_blocks(StandardBlock::JKPair).unwrap();
    let pencil = pencil_nonsingular(&jk, 64);
    let opts = SearchOptions::default();
    let sum = StructureTensor::new(
        2,
        4,
        vec![
            Mat::from_row_slice(4, 4, &[0., 1., 0., 0., -1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.]),
            Mat::from_row_slice(4, 4, &[0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., -1., 0.]),
        ],
    )
    .unwrap();
    let split = decomposition_search(&sum, &opts).unwrap();
    let split_ok = split.as_ref().is_some_and(|d| {
        d.v1.rows(2, 2).amax() < 1e-12 && d.v2.rows(0, 2).amax() < 1e-12 && d.z.len() == 1 && d.w.len() == 1
    });
    let jk_none = decomposition_search(&jk, &opts).unwrap().is_none();
    let sol_none = decomposition_search(&soliton_23(), &opts).unwrap().is_none();
    let specs = indecomposability_specs();
    let mut failed = Vec::new();
    for s in &specs {
        let c = build_family(s).unwrap();
        if structural_criteria(&c, Some(s)).verdict != Verdict::Indecomposable {
            failed.push(format!("{:?}(j={},k={},n={},d={})", s.kind, s.j, s.k, s.n, s.d));
        }
    }
    check(
        pencil && split_ok && jk_none && sol_none && failed.is_empty(),
        format!(
            "pencil(JK)={pencil}, sum split={split_ok}, JK none={jk_none}, soliton none={sol_none}, {}/{} families certified {:?}",
            specs.len() - failed.len(),
            specs.len(),
            failed
        ),
    )
}

fn crit9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut draw = |m: usize| -> Vec<f64> {
        (0..m)
            .map(|_| {
                let x: f64 = rng.random_range(0.1..3.0);
                if rng.random_bool(0.5) {
                    x
                } else {
                    -x
                }
            })
            .collect()
    };
    let mut bad = 0;
    for n in [2, 3] {
        let spec = |t: Vec<f64>| FamilySpec::non_einstein(2, 2 * n, n, 0).with_t(t);
        for _ in 0..50 {
            let (t, s) = (draw(n - 1), draw(n - 1));
            let it = orbit_separation_invariant(&spec(t.clone())).unwrap();
            let is = orbit_separation_invariant(&spec(s)).unwrap();
            let again = orbit_separation_invariant(&spec(t)).unwrap();
            if it.g_canonical == is.g_canonical || it != again {
                bad += 1;
            }
        }
    }
    check(bad == 0, format!("100 random pairs over n = 2, 3; {bad} failures"))
}

fn crit10() -> Outcome {
    let r = non_einstein_region(2, 40);
    let bound_ok = r.in_region && (r.moduli_lower_bound - 3.125).abs() < 1e-12;
    let edge_ok = non_einstein_region(2, 8).in_region && !non_einstein_region(5, 8).in_region;
    let table = region_table(20).unwrap();
    let mut missing = Vec::new();
    let mut checked = 0;
    for j in 2..=6 {
        for n in 1..=3 {
            for d in [0usize, 3] {
                let (p, q) = FamilySpec::non_einstein(j, (4 * n + d).div_ceil(2), n, d).type_pq().unwrap();
                if q > 20 {
                    continue;
                }
                checked += 1;
                let row = table.iter().find(|r| r.p == p && r.q == q);
                if row.map(|r| r.label) != Some(RegionLabel::ExistsNonEinstein) {
                    missing.push((p, q));
                }
            }
        }
    }
    check(
        bound_ok && edge_ok && missing.is_empty(),
        format!("bound(2,40)={}, boundary ok={edge_ok}, {checked} constructed types, unlabeled {missing:?}", r.moduli_lower_bound),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("moment oracle equivalence", crit1, Duration::from_secs(5)),
        ("known distinguished points", crit2, Duration::from_secs(1)),
        ("concatenated-soliton closure", crit3, Duration::from_secs(5)),
        ("H-detection exactness", crit4, Duration::from_secs(10)),
        ("non-Einstein certificates", crit5, Duration::from_secs(120)),
        ("flow behavior split", crit6, Duration::from_secs(180)),
        ("moduli table regression", crit7, Duration::from_secs(1)),
        ("indecomposability suite", crit8, Duration::from_secs(30)),
        ("orbit separation", crit9, Duration::from_secs(1)),
        ("region corollary", crit10, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome { ok: false, detail: format!("panicked: {msg}") }
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let ok = out.ok && in_time;
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<30} {}  [{:.2}s / {}s]  {}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { out.detail } else { format!("over time budget; {}", out.detail) }
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
