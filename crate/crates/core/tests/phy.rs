mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokcom::phy::{
    awgn, crc_append, crc_check, noise_var, packet_symbols, send_packet, ChannelCfg, Constellation, ConvCode,
};

use common::{conv_oracle, crc_oracle, exhaustive_codebook, ml_decode};

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.random()).collect()
}

fn bit_errors(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Bit error rate over `blocks` blocks of `block` bits on QPSK, coded or not.
fn ber(snr: f64, code: Option<&ConvCode>, blocks: u64, block: usize) -> f64 {
    let qam = Constellation::<f64>::new(4).unwrap();
    let n0 = noise_var(snr);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut errors = 0;
    for b in 0..blocks {
        let msg = random_bits(&mut rng, block);
        let tx_bits = code.map_or_else(|| msg.clone(), |c| c.encode(&msg));
        let (sym, pad) = qam.modulate(&tx_bits);
        let rx = awgn(&sym, n0, 41, b);
        let decoded = match code {
            Some(c) => {
                let mut llrs = qam.demod_llr(&rx, n0);
                llrs.truncate(llrs.len() - pad);
                c.viterbi_decode(&llrs).unwrap()
            }
            None => qam.hard_bits(&rx)[..block].to_vec(),
        };
        errors += bit_errors(&decoded, &msg);
    }
    errors as f64 / (blocks as usize * block) as f64
}

#[test]
fn coding_gain_ordering() {
    let k7 = ConvCode::k7();
    let coded6 = ber(6.0, Some(&k7), 1000, 1000);
    let coded4 = ber(4.0, Some(&k7), 1000, 1000);
    let uncoded4 = ber(4.0, None, 1000, 1000);
    eprintln!("coded 6 dB {coded6:.2e}, coded 4 dB {coded4:.2e}, uncoded 4 dB {uncoded4:.2e}");
    assert!(coded6 < coded4 && coded4 < uncoded4);
}

#[test]
fn crc_round_trip_and_double_flips() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let len = rng.random_range(1..512);
        let payload = random_bits(&mut rng, len);
        let check = crc_check(&crc_append(&payload)).unwrap();
        assert!(check.ok);
        assert_eq!(check.payload, payload);
    }
    for _ in 0..100_000 {
        let len = rng.random_range(1..=4096);
        let mut frame = crc_append(&random_bits(&mut rng, len));
        let i = rng.random_range(0..frame.len());
        let j = (i + rng.random_range(1..frame.len())) % frame.len();
        frame[i] ^= true;
        frame[j] ^= true;
        assert!(!crc_check(&frame).unwrap().ok);
    }
}

#[test]
fn crc_matches_long_division_on_byte_payloads() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let bytes: Vec<u8> = (0..rng.random_range(1..64)).map(|_| rng.random()).collect();
        let bits = tokcom::phy::bytes_to_bits(&bytes);
        assert_eq!(tokcom::phy::crc16(&bits), crc_oracle(&bytes));
    }
}

#[test]
fn sixty_db_is_clean() {
    let code = ConvCode::k7();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for order in [4, 16, 64] {
        let c = Constellation::<f64>::new(order).unwrap();
        let cfg = ChannelCfg::new(60.0, 1);
        for i in 0..1000 / 3 {
            let payload = random_bits(&mut rng, 56);
            let out = send_packet(&payload, &code, &c, &cfg, i).unwrap();
            assert!(out.crc_ok);
            assert_eq!(out.bits, payload);
            assert_eq!(out.symbols, packet_symbols(56, &code, c.bits_per_symbol()));
            assert_eq!(out.symbols, (2 * (56usize + 16 + 6)).div_ceil(c.bits_per_symbol()));
        }
    }
}

#[test]
fn llr_sign_is_the_hard_decision() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for order in [2, 4, 16, 64] {
        let c = Constellation::<f64>::new(order).unwrap();
        let (sym, _) = c.modulate(&random_bits(&mut rng, 600));
        let rx = awgn(&sym, noise_var(3.0), 6, order as u64);
        let llrs = c.demod_llr(&rx, noise_var(3.0));
        for (l, h) in llrs.iter().zip(c.hard_bits(&rx)) {
            if *l != 0.0 {
                assert_eq!(*l < 0.0, h);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn viterbi_is_ml_up_to_14_bits(len in 1usize..=14, k7 in any::<bool>(), seed in any::<u64>(), snr in -2.0f64..4.0) {
        let (code, k, gens) = if k7 { (ConvCode::k7(), 7, [0o171, 0o133]) } else { (ConvCode::new(3, 0o7, 0o5).unwrap(), 3, [0o7, 0o5]) };
        let book = exhaustive_codebook(len, k, gens);
        let bpsk = Constellation::<f64>::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n0 = noise_var(snr);
        for t in 0..4 {
            let msg = random_bits(&mut rng, len);
            let (tx, _) = bpsk.modulate(&code.encode(&msg));
            let llrs = bpsk.demod_llr(&awgn(&tx, n0, seed, t), n0);
            prop_assert_eq!(code.viterbi_decode(&llrs).unwrap(), ml_decode(&book, &llrs));
        }
    }

    #[test]
    fn encoder_matches_tap_sum_and_is_linear(a in proptest::collection::vec(any::<bool>(), 1..200), seed in any::<u64>()) {
        let code = ConvCode::k7();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_bits(&mut rng, a.len());
        let x: Vec<bool> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
        let (ea, eb, ex) = (code.encode(&a), code.encode(&b), code.encode(&x));
        prop_assert_eq!(ea.len(), 2 * (a.len() + 6));
        prop_assert_eq!(&ea, &conv_oracle(&a, 7, [0o171, 0o133]));
        let sum: Vec<bool> = ea.iter().zip(&eb).map(|(p, q)| p ^ q).collect();
        prop_assert_eq!(ex, sum);
    }

    #[test]
    fn constellations_have_unit_energy(order_log in 1u32..=6) {
        let order = 1usize << order_log;
        if let Ok(c) = Constellation::<f64>::new(order) {
            prop_assert!((c.mean_energy() - 1.0).abs() < 1e-9);
        }
    }
}
