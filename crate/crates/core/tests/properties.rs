use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use opconvex::cli::parse_fn_spec;
use opconvex::criteria::{run_check, CheckId, CheckOptions, DiscreteMeasure, Operands, Sampler};
use opconvex::frechet::{frechet_first, frechet_second};
use opconvex::funcrep::{catalog, eval_soc_rep, RepMeasure, Representation, ScalarFunction};
use opconvex::hermitian::{
    apply_fn, c64, gaussian_matrix, is_psd_geq, max_abs, random_unitary, sample_hermitian, schur_psd_equivalent,
    stream_rng, CMatrix, Ensemble, HermitianMatrix, Interval,
};

fn unit() -> Interval {
    Interval::closed(-1.0, 1.0).unwrap()
}

fn herm(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    let e = Ensemble::ALL[rng.gen_range(0..4)];
    sample_hermitian(rng, &unit(), n, 0.02, e).unwrap()
}

fn direction(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    let h = HermitianMatrix::new(gaussian_matrix(rng, n, n)).unwrap();
    h.scale(1.0 / h.norm())
}

fn smooth_functions() -> Vec<ScalarFunction> {
    vec![
        catalog("square", &[]).unwrap(),
        catalog("exp", &[]).unwrap(),
        catalog("resolvent_above", &[2.0]).unwrap(),
        catalog("resolvent_below", &[-1.5]).unwrap(),
        parse_fn_spec("shift(2,square)").unwrap().restrict(&unit()).unwrap(),
        parse_fn_spec("rep{c=0.3;below=[(-2,0.5)];above=[(1.5,0.25),(3,1)]}").unwrap(),
    ]
}

fn close(a: &HermitianMatrix, b: &HermitianMatrix, tol: f64) -> bool {
    max_abs(&(a.as_matrix() - b.as_matrix())) <= tol * (1.0 + a.max_abs().max(b.max_abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn functional_calculus_is_unitarily_covariant(seed in any::<u64>(), n in 1usize..6, which in 0usize..6) {
        let f = &smooth_functions()[which];
        let mut rng = stream_rng(seed, &[]);
        let t = herm(&mut rng, n);
        let u = random_unitary(&mut rng, n);
        let lhs = apply_fn(f, &t.congruence(&u)).unwrap();
        let rhs = apply_fn(f, &t).unwrap().congruence(&u);
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn polynomials_act_as_homomorphisms(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = stream_rng(seed, &[]);
        let t = herm(&mut rng, n);
        let sq = apply_fn(&catalog("square", &[]).unwrap(), &t).unwrap();
        let cube = apply_fn(&catalog("cube", &[]).unwrap(), &t).unwrap();
        let tm = t.as_matrix();
        prop_assert!(close(&sq, &HermitianMatrix::new(tm * tm).unwrap(), 1e-13));
        prop_assert!(close(&cube, &HermitianMatrix::new(tm * tm * tm).unwrap(), 1e-13));
    }

    #[test]
    fn first_derivative_is_linear(seed in any::<u64>(), n in 1usize..6, which in 0usize..6,
                                  alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let f = &smooth_functions()[which];
        let mut rng = stream_rng(seed, &[]);
        let t = herm(&mut rng, n);
        let (h1, h2) = (direction(&mut rng, n), direction(&mut rng, n));
        let combo = frechet_first(f, &t, &h1.scale(alpha).add(&h2.scale(beta))).unwrap();
        let split = frechet_first(f, &t, &h1).unwrap().scale(alpha)
            .add(&frechet_first(f, &t, &h2).unwrap().scale(beta));
        prop_assert!(close(&combo, &split, 1e-10));
    }

    #[test]
    fn second_derivative_is_quadratic(seed in any::<u64>(), n in 1usize..6, which in 0usize..6, s in -3.0f64..3.0) {
        let f = &smooth_functions()[which];
        let mut rng = stream_rng(seed, &[]);
        let t = herm(&mut rng, n);
        let h = direction(&mut rng, n);
        let scaled = frechet_second(f, &t, &h.scale(s)).unwrap();
        let expected = frechet_second(f, &t, &h).unwrap().scale(s * s);
        prop_assert!(close(&scaled, &expected, 1e-10));
    }

    #[test]
    fn derivatives_are_unitarily_covariant(seed in any::<u64>(), n in 1usize..6, which in 0usize..6) {
        let f = &smooth_functions()[which];
        let mut rng = stream_rng(seed, &[]);
        let t = herm(&mut rng, n);
        let h = direction(&mut rng, n);
        let u = random_unitary(&mut rng, n);
        let (tu, hu) = (t.congruence(&u), h.congruence(&u));
        let d1 = frechet_first(f, &tu, &hu).unwrap();
        let d2 = frechet_second(f, &tu, &hu).unwrap();
        prop_assert!(close(&d1, &frechet_first(f, &t, &h).unwrap().congruence(&u), 1e-10));
        prop_assert!(close(&d2, &frechet_second(f, &t, &h).unwrap().congruence(&u), 1e-10));
    }

    #[test]
    fn psd_order_is_reflexive_and_monotone(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = stream_rng(seed, &[]);
        let a = herm(&mut rng, n);
        let g = gaussian_matrix(&mut rng, n, n);
        let p = HermitianMatrix::new(&g * g.adjoint()).unwrap();
        prop_assert!(is_psd_geq(&a, &a, 1e-8).unwrap().pass);
        prop_assert!(is_psd_geq(&a.add(&p), &a, 1e-8).unwrap().pass);
    }

    #[test]
    fn rep_functions_print_and_parse_back(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, &[]);
        let lo = -3.0 + 2.0 * rng.gen::<f64>();
        let i = Interval::closed(lo, lo + 0.5 + 3.0 * rng.gen::<f64>()).unwrap();
        let rep = RepMeasure::random(&mut rng, i).unwrap();
        let f = rep.as_scalar_function();
        let g = parse_fn_spec(&f.to_string()).unwrap();
        for x in i.grid(1000).unwrap() {
            prop_assert_eq!(f.eval(x), g.eval(x));
        }
        // every value is at least the constant term
        for x in i.grid(50).unwrap() {
            prop_assert!(eval_soc_rep(&rep, x).unwrap() >= rep.c);
        }
    }

    #[test]
    fn catalog_functions_print_and_parse_back(a in -10.0f64..10.0, b in -10.0f64..10.0, e in 0.01f64..5.0) {
        for f in [
            catalog("affine", &[a, b]).unwrap(),
            catalog("constant", &[a]).unwrap(),
            catalog("resolvent_above", &[a]).unwrap(),
            catalog("resolvent_below", &[b]).unwrap(),
            catalog("eps_over", &[e]).unwrap(),
        ] {
            let g = parse_fn_spec(&f.to_string()).unwrap();
            prop_assert_eq!(&f, &g);
        }
    }

    #[test]
    fn iii_slack_equals_ii_slack_for_projections(seed in any::<u64>(), n in 1usize..6) {
        // f(0) = 0 on both functions, so the additive term vanishes
        let mut rng = stream_rng(seed, &[]);
        let box_ = unit();
        let sampler = Sampler::new(&box_).unwrap();
        let Operands::SocIi { t, p } = sampler.sample(&mut rng, CheckId::SocIi, n, 0).unwrap() else { unreachable!() };
        for f in [catalog("square", &[]).unwrap(), catalog("cube", &[]).unwrap()] {
            let opts = CheckOptions::default();
            let ii = run_check(&f, &Operands::SocIi { t: t.clone(), p: p.clone() }, &opts).unwrap();
            let iii = run_check(&f, &Operands::SocIii { t: t.clone(), p: p.clone() }, &opts).unwrap();
            prop_assert!((ii.margin - iii.margin).abs() <= 1e-12 * ii.scale);
        }
    }

    #[test]
    fn block8_pass_implies_ineq10_pass(seed in any::<u64>(), n in 1usize..5, which in 0usize..3) {
        let f = [catalog("resolvent_above", &[2.0]).unwrap(), catalog("square", &[]).unwrap(),
                 catalog("exp", &[]).unwrap()][which].clone();
        let mut rng = stream_rng(seed, &[]);
        let box_ = unit();
        let sampler = Sampler::new(&box_).unwrap();
        let trial = rng.gen_range(0..6);
        let Operands::Block8 { ts, a } = sampler.sample(&mut rng, CheckId::Block8, n, trial).unwrap() else { unreachable!() };
        let opts = CheckOptions::default();
        let b8 = run_check(&f, &Operands::Block8 { ts: ts.clone(), a: a.clone() }, &opts).unwrap();
        if let Ok(i10) = run_check(&f, &Operands::Ineq10 { ts, a }, &opts) {
            if b8.pass {
                prop_assert!(i10.pass);
            }
        }
    }

    #[test]
    fn harmonic_bound_sits_below_arithmetic(seed in any::<u64>(), atoms in 2usize..8) {
        let mut rng = stream_rng(seed, &[]);
        let points: Vec<f64> = (0..atoms).map(|_| rng.gen::<f64>() * 1.8 - 0.9).collect();
        let mu = DiscreteMeasure::uniform(points).unwrap();
        let f = catalog("resolvent_above", &[1.5]).unwrap();
        let opts = CheckOptions::default();
        let j13 = run_check(&f, &Operands::Jensen13 { mu: mu.clone() }, &opts).unwrap();
        let j14 = run_check(&f, &Operands::Jensen14 { mu }, &opts).unwrap();
        prop_assert!(j14.margin <= j13.margin + 1e-14);
        if j14.pass {
            prop_assert!(j13.pass);
        }
    }

    #[test]
    fn differential_block_agrees_with_schur_form(seed in any::<u64>(), n in 1usize..5, which in 0usize..6) {
        let f = &smooth_functions()[which];
        let mut rng = stream_rng(seed, &[]);
        let t = herm(&mut rng, n);
        let h = direction(&mut rng, n);
        let o = run_check(f, &Operands::Diff15 { t: t.clone(), h }, &CheckOptions::default()).unwrap();
        let ft = apply_fn(f, &t).unwrap();
        let lmin = opconvex::hermitian::eigh(&ft).unwrap().min();
        if lmin > 10.0 * o.tolerance * o.scale && o.normalized_margin().abs() > 1e-6 {
            prop_assert_eq!(o.schur_pass, Some(o.pass));
        }
    }
}

/// Schur-complement equivalence on 1000 instances away from the decision boundary.
#[test]
fn schur_complement_equivalence() {
    let mut agreements = 0;
    for k in 0..1000u64 {
        let mut rng = stream_rng(77, &[k]);
        let (m, n) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let g = gaussian_matrix(&mut rng, n, n);
        let c = HermitianMatrix::new(&g * g.adjoint() + CMatrix::identity(n, n) * c64(0.1)).unwrap();
        let b = gaussian_matrix(&mut rng, m, n);
        let c_inv = c.as_matrix().clone().try_inverse().unwrap();
        let base = HermitianMatrix::new(&b * c_inv * b.adjoint()).unwrap();
        // shift by a perturbation that is either clearly PSD or clearly not
        let u = random_unitary(&mut rng, m);
        let mut d: Vec<f64> = (0..m).map(|_| 0.1 + rng.gen::<f64>()).collect();
        let expect_pass = k % 2 == 0;
        if !expect_pass {
            d[0] = -0.1 - rng.gen::<f64>();
        }
        let shift = HermitianMatrix::diag(&d).unwrap().congruence(&u.adjoint());
        let a = base.add(&shift);
        let (block, schur) = schur_psd_equivalent(&a, &b, &c, 1e-8).unwrap();
        assert_eq!(block.pass, schur.pass, "instance {k}");
        assert_eq!(block.pass, expect_pass, "instance {k}");
        agreements += 1;
    }
    assert_eq!(agreements, 1000);
}
