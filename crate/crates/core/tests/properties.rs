use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nilsoliton::constructions::{b_tuple, build_family, concat, FamilySpec};
use nilsoliton::flow::{flow_to_distinguished, FlowOptions};
use nilsoliton::indecomposability::{decomposition_search, structural_criteria, SearchOptions};
use nilsoliton::certification::Verdict;
use nilsoliton::moduli::{generic_moduli_dim, region_table};
use nilsoliton::tensor::{dim_so, DEFAULT_RANK_TOL};
use nilsoliton::{
    distinguished_report, group_act, infinitesimal_act, minimality_defect, moment, moment_oracle, GroupElement,
    StructureTensor, Subgroup,
};

type Mat = DMatrix<f64>;

fn random_tensor(p: usize, q: usize, seed: u64) -> StructureTensor {
    StructureTensor::random(p, q, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_invertible(n: usize, rng: &mut ChaCha8Rng) -> Mat {
    // Identity plus a bounded perturbation keeps the condition number moderate.
    Mat::identity(n, n) + Mat::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3))
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

fn rel_diff(a: &StructureTensor, b: &StructureTensor) -> f64 {
    a.axpy(-1.0, b).norm() / a.norm().max(b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_action_is_a_left_action(p in 1usize..=4, q in 2usize..=6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_tensor(p, q, seed ^ 1);
        let e1 = GroupElement::new(random_invertible(q, &mut rng), random_invertible(p, &mut rng)).unwrap();
        let e2 = GroupElement::new(random_invertible(q, &mut rng), random_invertible(p, &mut rng)).unwrap();
        let lhs = group_act(&e1.compose(&e2), &c).unwrap();
        let rhs = group_act(&e1, &group_act(&e2, &c).unwrap()).unwrap();
        prop_assert!(rel_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn group_action_preserves_type(p in 1usize..=4, q in 3usize..=6, seed: u64) {
        prop_assume!(p <= dim_so(q));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_tensor(p, q, seed ^ 2);
        let e = GroupElement::new(random_invertible(q, &mut rng), random_invertible(p, &mut rng)).unwrap();
        prop_assert_eq!(c.is_type_pq(DEFAULT_RANK_TOL), group_act(&e, &c).unwrap().is_type_pq(DEFAULT_RANK_TOL));
    }

    #[test]
    fn infinitesimal_action_is_the_derivative(p in 1usize..=3, q in 2usize..=5, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_tensor(p, q, seed ^ 3);
        let x = { let a = Mat::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0)); (&a + a.transpose()) * 0.5 };
        let y = { let a = Mat::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0)); (&a + a.transpose()) * 0.5 };
        let d = infinitesimal_act(&x, &y, &c).unwrap();
        let err = |s: f64| {
            let e = GroupElement::new(Mat::identity(q, q) + &x * s, Mat::identity(p, p) + &y * s).unwrap();
            group_act(&e, &c).unwrap().axpy(-1.0, &c).axpy(-s, &d).norm()
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        // Second-order remainder: halving s divides the error by about 4.
        prop_assert!(e1 > 0.0 && (e1 / e2 - 4.0).abs() < 0.1, "ratio {}", e1 / e2);
    }

    #[test]
    fn moment_matches_oracle(p in 1usize..=4, q in 2usize..=6, seed: u64) {
        let c = random_tensor(p, q, seed);
        let (a, b) = (moment(&c), moment_oracle(&c));
        let scale = a.m1.amax().max(a.m2.amax());
        prop_assert!((&a.m1 - &b.m1).amax() <= 1e-10 * scale);
        prop_assert!((&a.m2 - &b.m2).amax() <= 1e-10 * scale);
    }

    #[test]
    fn residual_is_orthogonally_invariant(p in 1usize..=4, q in 3usize..=6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_tensor(p, q, seed ^ 5);
        let e = GroupElement::new(random_orthogonal(q, &mut rng), random_orthogonal(p, &mut rng)).unwrap();
        let r0 = distinguished_report(&c).unwrap();
        let r1 = distinguished_report(&group_act(&e, &c).unwrap()).unwrap();
        prop_assert!((r0.residual - r1.residual).abs() < 1e-8);
        prop_assert!((r0.r - r1.r).abs() < 1e-9 * r0.r.abs().max(1.0));
    }

    #[test]
    fn moment_scaling_law(p in 1usize..=4, q in 2usize..=6, seed: u64, s in 0.1f64..10.0) {
        let c = random_tensor(p, q, seed);
        let (m, ms) = (moment(&c), moment(&c.scaled(s)));
        let scale = m.m1.amax().max(m.m2.amax()) * s * s;
        prop_assert!((&ms.m1 - &m.m1 * (s * s)).amax() <= 1e-12 * scale);
        prop_assert!((&ms.m2 - &m.m2 * (s * s)).amax() <= 1e-12 * scale);
        let (r0, r1) = (distinguished_report(&c).unwrap(), distinguished_report(&c.scaled(s)).unwrap());
        prop_assert!((r1.r - s * s * r0.r).abs() <= 1e-10 * (s * s * r0.r).abs());
        prop_assert!((r1.residual - r0.residual).abs() <= 1e-10);
    }

    #[test]
    fn concat_is_skew_and_typed(p in 1usize..=3, q1 in 3usize..=5, q2 in 3usize..=5, seed: u64) {
        let (a, b) = (random_tensor(p, q1, seed), random_tensor(p, q2, seed ^ 7));
        let c = concat(&a, &b).unwrap();
        prop_assert_eq!((c.p(), c.q()), (p, q1 + q2));
        prop_assert!(c.mats().iter().all(|m| (m + m.transpose()).amax() == 0.0));
        prop_assert!(c.is_type_pq(DEFAULT_RANK_TOL));
    }

    #[test]
    fn moduli_dual_symmetry(q in 3usize..=14, pick in 0.0f64..1.0) {
        let d = dim_so(q);
        let p = 1 + ((d - 1) as f64 * pick) as usize;
        prop_assume!(p < d);
        prop_assert_eq!(generic_moduli_dim(p, q).unwrap().dim, generic_moduli_dim(d - p, q).unwrap().dim);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_stays_on_sphere_and_descends(p in 1usize..=3, q in 3usize..=5, seed: u64) {
        let c = random_tensor(p, q, seed);
        let opts = FlowOptions { max_iter: 300, ..FlowOptions::default() };
        let res = flow_to_distinguished(&c, &opts).unwrap();
        prop_assert!((res.final_tensor.norm() - 1.0).abs() < 1e-12);
        prop_assert!(res.monotone);
        let start = moment(&c.normalized().unwrap()).norm_sq();
        prop_assert!(res.objective <= start * (1.0 + 1e-12));
    }

    #[test]
    fn flow_is_orthogonally_equivariant(p in 1usize..=3, q in 3usize..=5, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_tensor(p, q, seed ^ 11);
        let e = GroupElement::new(random_orthogonal(q, &mut rng), random_orthogonal(p, &mut rng)).unwrap();
        let opts = FlowOptions { max_iter: 200, record_every: 1, ..FlowOptions::default() };
        let a = flow_to_distinguished(&c, &opts).unwrap();
        let b = flow_to_distinguished(&group_act(&e, &c).unwrap(), &opts).unwrap();
        prop_assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (x, y) in a.trajectory.iter().zip(&b.trajectory) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn minimal_points_are_distinguished() {
    // m(C) ∈ ℝ·Id on both factors forces m(C)·C ∈ ℝ·C.
    let mut minimal = 0;
    for j in 1..=6 {
        let c = b_tuple(j);
        if minimality_defect(&c, Subgroup::SLboth).unwrap() < 1e-12 {
            minimal += 1;
            assert!(distinguished_report(&c).unwrap().residual < 1e-12);
        }
    }
    assert_eq!(minimal, 6);
}

#[test]
fn certified_families_do_not_split() {
    let mut specs: Vec<FamilySpec> = (1..=4).map(FamilySpec::b_blocks).collect();
    specs.push(FamilySpec::soliton());
    specs.push(FamilySpec::heisenberg(2));
    for j in 2..=4 {
        specs.push(FamilySpec::non_einstein(j, 2, 1, 0));
        specs.push(FamilySpec::non_einstein(j, 4, 2, 0).with_t(vec![1.7]));
    }
    specs.push(FamilySpec::j9(3));
    specs.push(FamilySpec::j9(4));
    for s in &specs {
        let c = build_family(s).unwrap();
        assert_eq!(structural_criteria(&c, Some(s)).verdict, Verdict::Indecomposable, "{s:?}");
        assert!(decomposition_search(&c, &SearchOptions::default()).unwrap().is_none(), "{s:?}");
    }
}

#[test]
fn region_table_labels_are_total() {
    let rows = region_table(12).unwrap();
    for q in 2..=12 {
        for p in 1..=dim_so(q) {
            assert_eq!(rows.iter().filter(|r| r.p == p && r.q == q).count(), 1);
        }
    }
}
