mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{finite_difference_check, random_pairs, seeded, tiny_config, TINY_VOCAB};
use paraclap::model::{
    embed_batch, forward_backward, similarity_matrix, symmetric_ce_grad, symmetric_ce_loss, ModelParams,
    PairInput, SimilarityMatrix,
};

fn setup(seed: u64, n: usize) -> (ModelParams, Vec<PairInput>) {
    let mut rng = seeded(seed);
    let params = ModelParams::init(&tiny_config(), TINY_VOCAB, &mut rng);
    let pairs = random_pairs(n, TINY_VOCAB, &mut rng);
    (params, pairs)
}

fn argmax_rows(s: &Array2<f64>) -> Vec<usize> {
    s.rows()
        .into_iter()
        .map(|r| (0..r.len()).fold(0, |best, j| if r[j] > r[best] { j } else { best }))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_of_similarity_sums_to_zero(seed in any::<u64>(), n in 1usize..10) {
        let (params, pairs) = setup(seed, n);
        let sim = forward_backward(&pairs, &params).unwrap().similarity;
        let g = symmetric_ce_grad(&sim);
        // Both softmax terms sum to N and cancel the 2I.
        prop_assert!(g.sum().abs() < 1e-12);
        prop_assert!(g.diag().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn joint_permutation_leaves_loss_unchanged(seed in any::<u64>(), n in 2usize..10) {
        let (params, mut pairs) = setup(seed, n);
        let before = forward_backward(&pairs, &params).unwrap().loss;
        pairs.shuffle(&mut seeded(seed ^ 1));
        let after = forward_backward(&pairs, &params).unwrap().loss;
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn loss_is_symmetric_under_transpose(seed in any::<u64>(), n in 1usize..10) {
        let (params, pairs) = setup(seed, n);
        let sim = forward_backward(&pairs, &params).unwrap().similarity;
        let t = SimilarityMatrix { s: sim.s.t().to_owned() };
        let (a, b) = (symmetric_ce_loss(&sim).unwrap(), symmetric_ce_loss(&t).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn temperature_preserves_ranking(seed in any::<u64>(), n in 2usize..10, tau in 0.01f64..100.0) {
        let (params, pairs) = setup(seed, n);
        let batch = embed_batch(&pairs, &params).unwrap();
        let a = similarity_matrix(&batch, 1.0).unwrap();
        let b = similarity_matrix(&batch, tau).unwrap();
        prop_assert_eq!(argmax_rows(&a.s), argmax_rows(&b.s));
        prop_assert_eq!(argmax_rows(&a.s.t().to_owned()), argmax_rows(&b.s.t().to_owned()));
    }

    #[test]
    fn loss_is_non_negative_and_bounded(seed in any::<u64>(), n in 1usize..10) {
        let (params, pairs) = setup(seed, n);
        let fb = forward_backward(&pairs, &params).unwrap();
        // With unit rows |S| <= tau, so each softmax entry is at least e^{-2 tau} / N.
        let bound = (n as f64).ln() + 2.0 * params.tau();
        prop_assert!(fb.loss >= 0.0 && fb.loss <= bound);
        prop_assert!(fb.grads.is_finite());
    }
}

#[test]
fn finite_differences_on_odd_batches() {
    for (seed, n) in [(11, 3), (12, 5), (13, 7)] {
        let (params, pairs) = setup(seed, n);
        let check = finite_difference_check(&pairs, &params, 1e-4, 1e-6);
        assert!(check.max_rel_err < 1e-4, "seed {seed}, N={n}: {}", check.worst);
    }
}

#[test]
fn uniform_similarity_has_no_temperature_gradient() {
    let (params, pairs) = setup(4, 1);
    let same = vec![pairs[0].clone(); 6];
    let fb = forward_backward(&same, &params).unwrap();
    assert!((fb.loss - 6f64.ln()).abs() < 1e-12);
    assert!(fb.grads.log_tau.abs() < 1e-12);
}

#[test]
fn single_pair_has_zero_loss_and_gradient() {
    let (params, pairs) = setup(5, 1);
    let fb = forward_backward(&pairs, &params).unwrap();
    assert_eq!(fb.loss, 0.0);
    assert!(fb.grads.tensors().iter().all(|t| t.data.iter().all(|&g| g == 0.0)));
}
