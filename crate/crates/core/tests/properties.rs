//! Algebraic and matrix invariants over random inputs.

mod support;

use num_rational::BigRational;
use proptest::prelude::*;
use stocm::kernels::{cholesky, diffusion, diffusion_closed_form, g0_precision, ConvolutionChain};
use stocm::weak::replacement;
use stocm::{NoiseExpr, Primary, Rate};

use support::q;

fn coefficient() -> impl Strategy<Value = BigRational> {
    (-6i64..=6, 1i64..=5).prop_filter("nonzero", |(n, _)| *n != 0).prop_map(|(n, d)| q(n, d))
}

fn linear() -> impl Strategy<Value = Primary> {
    let leaf = (1u32..=5).prop_map(Primary::atom);
    leaf.prop_recursive(3, 8, 1, |inner| (2u32..=5, inner).prop_map(|(m, p)| Primary::conv(m, p)))
}

fn convolved_linear() -> impl Strategy<Value = Primary> {
    (2u32..=5, linear()).prop_map(|(m, p)| Primary::conv(m, p))
}

fn quadratic() -> impl Strategy<Value = Primary> {
    let product = || (linear(), linear()).prop_map(|(a, b)| Primary::product(a, b).unwrap());
    prop_oneof![
        3 => product(),
        1 => (2u32..=5, product()).prop_map(|(m, p)| Primary::conv(m, p)),
    ]
}

fn primary() -> impl Strategy<Value = Option<Primary>> {
    prop_oneof![
        1 => Just(None),
        3 => linear().prop_map(Some),
        3 => quadratic().prop_map(Some),
    ]
}

fn terms() -> impl Strategy<Value = Vec<(BigRational, Option<Primary>)>> {
    prop::collection::vec((coefficient(), primary()), 0..6)
}

fn expr() -> impl Strategy<Value = NoiseExpr> {
    terms().prop_map(|t| NoiseExpr::canonicalize(t).unwrap())
}

fn random_chain(max_len: usize) -> impl Strategy<Value = Vec<BigRational>> {
    prop::collection::btree_set((1i64..=40, 1i64..=4).prop_map(|(n, d)| q(n, d)), 1..=max_len)
        .prop_map(|s| s.into_iter().collect::<Vec<_>>())
        .prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn canonical_form_ignores_term_order(t in terms(), seed in any::<u64>()) {
        let a = NoiseExpr::canonicalize(t.clone()).unwrap();
        let mut shuffled = t;
        let n = shuffled.len().max(1);
        shuffled.rotate_left((seed as usize) % n);
        shuffled.reverse();
        prop_assert_eq!(NoiseExpr::canonicalize(shuffled).unwrap(), a);
    }

    #[test]
    fn canonical_terms_are_nonzero_and_canonical(e in expr()) {
        for (c, p) in e.iter() {
            prop_assert!(!num_traits::Zero::is_zero(c));
            if let Some(p) = p {
                prop_assert_eq!(&p.canonical().unwrap(), p);
            }
        }
    }

    #[test]
    fn addition_is_a_group(a in expr(), b in expr()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert!((&(&a + &b) - &b).eq(&a));
        prop_assert!((&a + &(-&a)).is_zero());
    }

    #[test]
    fn split_recovers_the_expression(e in expr()) {
        let (field, evolution) = e.split_solvability();
        prop_assert!(field.iter().all(|(_, p)| p.is_some_and(|p| p.all_atoms_convolved())));
        prop_assert!(evolution.iter().all(|(_, p)| p.is_none_or(|p| !p.all_atoms_convolved())));
        prop_assert_eq!(&field.ddt().unwrap() + &evolution, e);
    }

    #[test]
    fn ddt_obeys_leibniz(a in convolved_linear(), b in convolved_linear(), c in coefficient()) {
        let ea = NoiseExpr::term(c, a).unwrap();
        let eb = NoiseExpr::term(q(1, 1), b).unwrap();
        let lhs = ea.try_mul(&eb).unwrap().ddt().unwrap();
        let rhs = &ea.ddt().unwrap().try_mul(&eb).unwrap() + &ea.try_mul(&eb.ddt().unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn convolution_inverts_ddt_plus_rate(a in linear(), m in 2u32..=5) {
        let e = NoiseExpr::term(q(1, 1), a).unwrap();
        let rate = Rate::mode(m).unwrap();
        let h = e.convolve(&rate);
        let beta = rate.beta();
        prop_assert_eq!(&h.ddt().unwrap() + &(&h * &beta), e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn closed_form_diffusion_matches_isometry(rates in random_chain(3)) {
        let chain = ConvolutionChain::new(rates.clone()).unwrap();
        let d = diffusion_closed_form(&chain).unwrap();
        let oracle = support::diffusion(&rates);
        for i in 0..rates.len() {
            for j in 0..rates.len() {
                prop_assert_eq!(d.get(i, j), &oracle[i][j]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn four_rate_factor_is_exact(rates in random_chain(4).prop_filter("four", |r| r.len() == 4)) {
        let chain = ConvolutionChain::new(rates.clone()).unwrap();
        let half = cholesky(&chain).unwrap().half_llt_exact().unwrap();
        let oracle = support::diffusion(&rates);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(half.get(i, j), &oracle[i][j]);
            }
        }
    }

    #[test]
    fn five_rate_factor_residual(rates in random_chain(5).prop_filter("five", |r| r.len() == 5)) {
        let chain = ConvolutionChain::new(rates.clone()).unwrap();
        let l = cholesky(&chain).unwrap().to_f64();
        let half = &l * l.transpose() * 0.5;
        let oracle = support::diffusion(&rates);
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((half[(i, j)] - support::to_f64(&oracle[i][j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn precision_inverts_four_diffusion(rates in random_chain(4)) {
        let chain = ConvolutionChain::new(rates.clone()).unwrap();
        let m = g0_precision(&chain).unwrap();
        let inv = support::inverse(
            &(0..rates.len()).map(|i| (0..rates.len()).map(|j| m.get(i, j).clone()).collect()).collect::<Vec<_>>(),
        );
        let d = support::diffusion(&rates);
        for i in 0..rates.len() {
            for j in 0..rates.len() {
                prop_assert_eq!(&inv[i][j], &(&d[i][j] * q(4, 1)));
            }
        }
    }

    #[test]
    fn library_and_oracle_diffusion_agree(rates in random_chain(5)) {
        let chain = ConvolutionChain::new(rates.clone()).unwrap();
        let d = diffusion(&chain);
        let oracle = support::diffusion(&rates);
        for i in 0..rates.len() {
            for j in 0..rates.len() {
                prop_assert_eq!(d.get(i, j), &oracle[i][j]);
            }
        }
    }

    #[test]
    fn replacement_weights_carry_the_variance(
        modes in prop::collection::vec(2u32..=6, 1..=3),
        outer in 1u32..=4,
        inner in 1u32..=4,
    ) {
        let rates: Vec<Rate> = modes.iter().map(|&m| Rate::mode(m).unwrap()).collect();
        let r = replacement(outer, inner, &rates).unwrap();
        let betas: Vec<BigRational> = rates.iter().map(Rate::beta).collect();
        let distinct = betas.iter().collect::<std::collections::BTreeSet<_>>().len() == betas.len();
        if distinct {
            let n = betas.len();
            let target = support::to_f64(&support::kernel_inner(&betas, n, n));
            let sum: f64 = r.psi.iter().map(|(_, v)| v.to_f64().powi(2)).sum();
            prop_assert!((sum - target).abs() <= 1e-12 * target.max(1e-300) + 1e-15);
        }
        let expected = if outer == inner && n_is_one(&modes) { q(1, 2) } else { q(0, 1) };
        prop_assert_eq!(r.drift, expected);
    }
}

fn n_is_one(modes: &[u32]) -> bool {
    modes.len() == 1
}
