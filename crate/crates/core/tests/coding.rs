use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokcom::entropy_coding::{ac_decode, ac_encode, drop_tokens};
use tokcom::predictor::{cross_entropy, fill, train_markov, FillMode, FillSchedule, SourceModel};
use tokcom::tokens::{MarkovSource, MaskedSequence, SideInfo, TokenSequence};

fn accuracy(a: &TokenSequence, b: &TokenSequence) -> f64 {
    a.ids().iter().zip(b.ids()).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

#[test]
fn constant_sequence_is_recovered_after_dropping_half() {
    let q = 16;
    let mut probs = vec![0.0; q];
    probs[5] = 1.0;
    let src = MarkovSource::iid(probs).unwrap();
    let model = SourceModel::bidirectional(&src).unwrap();
    let seq = TokenSequence::new(q as u32, vec![5; 64]).unwrap();
    let masked = drop_tokens(&model, &seq, &SideInfo::None, 0.5).unwrap();
    assert_eq!(masked.masked_count(), 32);
    let out = fill(&model, &masked, &SideInfo::None, &FillSchedule::default(), FillMode::Argmax).unwrap();
    assert_eq!(out.sequence, seq);
}

#[test]
fn saliency_drop_beats_random_drop() {
    let src = MarkovSource::sticky(64, 0.9).unwrap();
    let model = SourceModel::bidirectional(&src).unwrap();
    let schedule = FillSchedule::default();
    let (n, trials) = (64usize, 10_000u64);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut salient, mut random) = (0.0, 0.0);
    for t in 0..trials {
        let seq = src.generate(n, &SideInfo::None, t).unwrap();
        let masked = drop_tokens(&model, &seq, &SideInfo::None, 0.8).unwrap();
        let dropped = masked.masked_count();
        salient += accuracy(&fill(&model, &masked, &SideInfo::None, &schedule, FillMode::Argmax).unwrap().sequence, &seq);

        let mut other = MaskedSequence::from_sequence(&seq);
        for i in sample(&mut rng, n, dropped) {
            other.mask(i);
        }
        random += accuracy(&fill(&model, &other, &SideInfo::None, &schedule, FillMode::Argmax).unwrap().sequence, &seq);
    }
    let (salient, random) = (salient / trials as f64, random / trials as f64);
    assert!(salient >= random, "saliency {salient} random {random}");
}

fn order1_model(q: u32, seed: u64) -> (tokcom::predictor::MarkovModel, TokenSequence) {
    let src = MarkovSource::sticky(q, 0.7).unwrap();
    let train = src.generate(2000, &SideInfo::None, seed).unwrap();
    let seq = src.generate(300, &SideInfo::None, seed ^ 1).unwrap();
    (train_markov(&[train], 1, 0.5).unwrap(), seq)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn arithmetic_coding_is_lossless_with_bounded_overhead(q in 2u32..300, seed in any::<u64>()) {
        let (model, seq) = order1_model(q, seed);
        let bits = ac_encode(&model, &seq, &SideInfo::None).unwrap();
        prop_assert_eq!(&ac_decode(&model, &bits, seq.len(), &SideInfo::None).unwrap(), &seq);
        let ideal = seq.len() as f64 * cross_entropy(&model, &seq, &SideInfo::None).unwrap();
        prop_assert!(bits.len() as f64 - ideal <= 32.0 + 1e-3 * seq.len() as f64);
    }

    #[test]
    fn random_sequences_round_trip(q in 2u32..2000, n in 1usize..200, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = TokenSequence::new(q, (0..n).map(|_| rng.random_range(0..q)).collect()).unwrap();
        let train = TokenSequence::new(q, (0..200).map(|_| rng.random_range(0..q)).collect()).unwrap();
        let model = train_markov(&[train], 1, 1.0).unwrap();
        let bits = ac_encode(&model, &seq, &SideInfo::None).unwrap();
        prop_assert_eq!(ac_decode(&model, &bits, n, &SideInfo::None).unwrap(), seq);
    }

    #[test]
    fn drop_tokens_partitions_positions(keep in 0.05f64..=1.0, seed in any::<u64>()) {
        let src = MarkovSource::sticky(32, 0.8).unwrap();
        let model = SourceModel::bidirectional(&src).unwrap();
        let seq = src.generate(100, &SideInfo::None, seed).unwrap();
        let masked = drop_tokens(&model, &seq, &SideInfo::None, keep).unwrap();
        let want = (((1.0 - keep) * 100.0) + 1e-9).floor() as usize;
        prop_assert_eq!(masked.masked_count(), want);
        for (i, slot) in masked.slots().iter().enumerate() {
            match slot.known() {
                Some(id) => prop_assert_eq!(id, seq.ids()[i]),
                None => prop_assert!(slot.is_masked()),
            }
        }
    }
}
