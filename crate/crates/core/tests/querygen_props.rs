mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{fixtures, seeded};
use paraclap::querygen::{
    build_template_bank, caption_pool, emotion_queries, sample_caption, CaptionPolicy, TemplateBank, CONJUNCTION,
};

fn excited_pool() -> (Vec<String>, Vec<String>) {
    let bank = build_template_bank();
    let (r, f) = fixtures::excited();
    let mut pool = caption_pool(&bank, &r, Some(&f), &fixtures::thresholds());
    pool.dedup();
    (pool, emotion_queries(&bank, "happiness").unwrap())
}

#[test]
fn rand_policy_reaches_every_query() {
    let (pool, emo) = excited_pool();
    let mut seen = BTreeSet::new();
    let mut rng = seeded(1);
    for _ in 0..10_000 {
        let c = sample_caption(&pool, &CaptionPolicy::rand(5), &emo, &mut rng).unwrap();
        assert!((1..=5).contains(&c.parts.len()));
        seen.extend(c.parts);
    }
    assert_eq!(seen.len(), pool.iter().collect::<BTreeSet<_>>().len());
}

#[test]
fn no_emo_reaches_every_non_emotion_query() {
    let (pool, emo) = excited_pool();
    let mut seen = BTreeSet::new();
    let mut rng = seeded(2);
    for _ in 0..10_000 {
        let c = sample_caption(&pool, &CaptionPolicy::no_emo_rand(3), &emo, &mut rng).unwrap();
        assert!(c.parts.iter().all(|p| !emo.contains(p)));
        seen.extend(c.parts);
    }
    let expected: BTreeSet<&String> = pool.iter().filter(|q| !emo.contains(q)).collect();
    assert_eq!(seen.iter().collect::<BTreeSet<_>>(), expected);
}

#[test]
fn sampling_is_reproducible() {
    let (pool, emo) = excited_pool();
    let draw = |seed| {
        let mut rng = seeded(seed);
        (0..50)
            .map(|_| sample_caption(&pool, &CaptionPolicy::rand(4), &emo, &mut rng).unwrap().text)
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}

#[test]
fn bank_json_round_trip() {
    let bank = build_template_bank();
    let back = TemplateBank::from_json(&bank.to_json().unwrap()).unwrap();
    assert_eq!(back, bank);
}

proptest! {
    #[test]
    fn caption_text_is_joined_parts(seed in any::<u64>(), n in 1usize..8) {
        let (pool, emo) = excited_pool();
        let c = sample_caption(&pool, &CaptionPolicy::rand(n), &emo, &mut seeded(seed)).unwrap();
        prop_assert!(c.parts.len() <= n);
        prop_assert_eq!(c.text, c.parts.join(CONJUNCTION));
        let distinct: BTreeSet<&String> = c.parts.iter().collect();
        prop_assert_eq!(distinct.len(), c.parts.len());
    }
}
