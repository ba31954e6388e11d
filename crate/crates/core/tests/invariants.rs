use afqms::cfrac::{baire_distance, BaireSequence, DigitStream, IrrationalHandle};
use afqms::convergence::{
    ball_hausdorff_bound, ball_hausdorff_sampled, es_certificate, propinquity_tail_bound, seminorm_distortion,
    CertificateOptions, TailSummary,
};
use afqms::fdca::{gns_inner, op_norm, trace_state, AlgebraElement, BlockShape, TraceWeights};
use afqms::gns::cond_expectation;
use afqms::spectral::{lip_seminorm, LipOptions};
use afqms::tower::{es_tower, uhf_tower, verify_tower};
use afqms::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stream(prefix: Vec<u64>, period: Vec<u64>) -> IrrationalHandle {
    IrrationalHandle::Digits(DigitStream::periodic(prefix, period).unwrap())
}

fn digits() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
    (
        prop::collection::vec(1u64..4, 0..4),
        prop::collection::vec(1u64..4, 1..3),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn es_towers_verify((prefix, period) in digits()) {
        let t = es_tower(&stream(prefix, period), 4).unwrap();
        let report = verify_tower(&t);
        prop_assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    }

    #[test]
    fn uhf_towers_verify(prefix in prop::collection::vec(1u64..3, 0..3)) {
        let b = BaireSequence::new(prefix, vec![1]).unwrap();
        prop_assert!(verify_tower(&uhf_tower(&b, 3).unwrap()).passed());
    }

    #[test]
    fn expectation_preserves_trace_and_bimodule((prefix, period) in digits(), seed in 0u64..1000) {
        let t = es_tower(&stream(prefix, period), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let a = AlgebraElement::random(t.shape(n).unwrap(), &mut rng);
        let w = t.weights(n).unwrap();
        for k in 0..n {
            let e = cond_expectation(&t, n, k, &a).unwrap();
            let gap = (trace_state(w, &e).unwrap() - trace_state(w, &a).unwrap()).norm();
            prop_assert!(gap < 1e-10);
            let c = t.embed_through(k, n, &AlgebraElement::random(t.shape(k).unwrap(), &mut rng)).unwrap();
            let lhs = cond_expectation(&t, n, k, &c.mul(&a).unwrap()).unwrap();
            let rhs = c.mul(&e).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-9 * (1.0 + op_norm(&c) * op_norm(&a)));
            // a − E_k(a) is orthogonal to the image.
            let r = a.sub(&e).unwrap();
            prop_assert!(gns_inner(w, &r, &c).unwrap().norm() < 1e-9 * (1.0 + op_norm(&c) * op_norm(&a)));
        }
    }

    #[test]
    fn lip_is_coherent_for_random_streams(
        prefix in prop::collection::vec(1u64..3, 0..3),
        period in prop::collection::vec(1u64..3, 1..3),
        seed in 0u64..1000,
    ) {
        let t = es_tower(&stream(prefix, period), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = AlgebraElement::random_self_adjoint(t.shape(1).unwrap(), &mut rng);
        let base = lip_seminorm(&t, 1, &a, &LipOptions::default()).unwrap().value;
        let up = t.embed_through(1, 3, &a).unwrap();
        let top = lip_seminorm(&t, 3, &up, &LipOptions::default()).unwrap().value;
        prop_assert!((top - base).abs() <= 1e-8 * base);
    }

    #[test]
    fn sampled_ball_distance_below_bound(
        x in prop::collection::vec(0.05f64..1.0, 2..4),
        y in prop::collection::vec(0.05f64..1.0, 2..4),
        seed in 0u64..1000,
    ) {
        let k = x.len().min(y.len());
        let shape = BlockShape::new((1..=k).collect()).unwrap();
        let (wx, wy) = (TraceWeights::new(x[..k].to_vec()).unwrap(), TraceWeights::new(y[..k].to_vec()).unwrap());
        let bound = ball_hausdorff_bound(&shape, &wx, &wy).unwrap();
        let sampled = ball_hausdorff_sampled(&shape, &wx, &wy, 50, seed).unwrap();
        prop_assert!(sampled <= bound + 1e-9);
    }

    #[test]
    fn certificate_tails_are_propinquity_tails(j in 4usize..10, tail in 2u64..5) {
        let g = IrrationalHandle::golden();
        let near = stream(vec![1; j], vec![tail]);
        let opts = CertificateOptions { depth: 20, samples: 2, ..CertificateOptions::default() };
        match es_certificate(&g, &near, 0.3, &opts) {
            Ok(c) => {
                for (h, summary) in [(&g, &c.tails[0]), (&near, &c.tails[1])] {
                    let tb = propinquity_tail_bound(&es_tower(h, opts.depth).unwrap(), c.n1).unwrap();
                    prop_assert_eq!(TailSummary::from(&tb), summary.clone());
                }
                prop_assert!(c.n2 >= c.n1 && c.tails_total < c.tail_budget);
            }
            Err(Error::AgreementTooShallow { agreement, cutoff }) => prop_assert!(agreement < cutoff),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn baire_distance_of_suffix_swap(keep in 0usize..20, a in 2u64..5) {
        let ones = BaireSequence::constant(1).unwrap();
        let swapped = ones.with_suffix(keep, &[a]).unwrap();
        prop_assert_eq!(baire_distance(&ones, &swapped).value, 2f64.powi(-(keep as i32)));
    }
}

#[test]
fn randomized_operations_are_reproducible() {
    let t = es_tower(&IrrationalHandle::golden(), 3).unwrap();
    let near = es_tower(&stream(vec![1; 5], vec![2]), 3).unwrap();
    let a = seminorm_distortion(&t, &near, 3, 6, 42).unwrap();
    let b = seminorm_distortion(&t, &near, 3, 6, 42).unwrap();
    assert_eq!(a.max_abs.to_bits(), b.max_abs.to_bits());
    assert_eq!(a.mean_abs.to_bits(), b.mean_abs.to_bits());
    assert!(!a.certified);
    let s = BlockShape::new(vec![2, 1]).unwrap();
    let (w1, w2) = (
        TraceWeights::new(vec![0.3, 0.7]).unwrap(),
        TraceWeights::new(vec![0.6, 0.4]).unwrap(),
    );
    let x = ball_hausdorff_sampled(&s, &w1, &w2, 100, 9).unwrap();
    let y = ball_hausdorff_sampled(&s, &w1, &w2, 100, 9).unwrap();
    assert_eq!(x.to_bits(), y.to_bits());
}

#[test]
fn distortion_shrinks_with_agreement() {
    let g = es_tower(&IrrationalHandle::golden(), 3).unwrap();
    let shallow = seminorm_distortion(&g, &es_tower(&stream(vec![1; 4], vec![2]), 3).unwrap(), 3, 8, 1).unwrap();
    let deep = seminorm_distortion(&g, &es_tower(&stream(vec![1; 8], vec![2]), 3).unwrap(), 3, 8, 1).unwrap();
    assert!(shallow.max_abs > 0.0);
    assert!(deep.max_abs < shallow.max_abs);
}
