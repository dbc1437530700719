//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokcom::entropy_coding::{ac_decode, ac_encode};
use tokcom::link::{transmit, ArqPolicy, ForcedPerChannel, McsEntry, McsPolicy, PacketPlan, TransmitConfig};
use tokcom::metrics::{bpp, comm_time, compute_time, expected_retx, tce, ComputeProfile, SystemParams};
use tokcom::phy::{awgn, crc_append, crc_check, noise_var, send_packet, ChannelCfg, Constellation, ConvCode};
use tokcom::predictor::{train_markov, ProbModel, SourceModel, UniformModel};
use tokcom::semmap::{
    brute_force, build_confusion, expected_distortion, optimize, psk_points, uniform_prior, AnnealSchedule,
    Assignment, ConfusionMethod, Matrix, Method, SemanticDistance,
};
use tokcom::tokens::{MarkovSource, MarkovTable, SideInfo, TokenSequence};
use tokcom::Rational;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn metric_arithmetic() -> Outcome {
    let p = SystemParams::<f64>::paper();
    let t = tce(&p, 1.0).unwrap();
    let b = bpp(&p, 1.0).unwrap();
    let titok = bpp(&SystemParams::<f64>::titok(), 1.0).unwrap();
    let exact = tce(&SystemParams::<Rational>::paper(), Rational::from_integer(1)).unwrap();
    let fp4 = compute_time(&ComputeProfile::<f64>::fp4_1000tops()) * 1e3;
    let int8 = compute_time(&ComputeProfile::<f64>::int8_275tops()) * 1e3;
    let c6 = comm_time(&p, expected_retx(0.4).unwrap(), None).unwrap() * 1e3;
    let c9 = comm_time(&p, expected_retx(0.043).unwrap(), None).unwrap() * 1e3;
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let checks = [
        exact == Rational::new(128, 5),
        (t - 25.6).abs() < 1e-12,
        (b - 0.0391).abs() < 5e-5 && (round_to(b, 3) - 0.039).abs() < 1e-12,
        (titok - 0.0254).abs() < 5e-5 && (round_to(titok, 3) - 0.025).abs() < 1e-12,
        (fp4 - 19.2).abs() < 1e-9,
        (round_to(int8, 1) - 34.9).abs() < 1e-9,
        rel(c6, 43.7) <= 0.03,
        rel(c9, 26.7) <= 0.005,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "tce={t} bpp={b:.4} titok_bpp={titok:.4} compute={fp4:.1}/{int8:.1} ms comm6dB={c6:.2} ms ({:.2}%) comm9dB={c9:.2} ms ({:.2}%)",
            100.0 * rel(c6, 43.7),
            100.0 * rel(c9, 26.7)
        ),
    )
}

fn retransmission_law() -> Outcome {
    let n_packets = 100_000usize;
    let q = 1024;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seq = TokenSequence::new(q, (0..4 * n_packets).map(|_| rng.random_range(0..q)).collect()).unwrap();
    let plan = PacketPlan::new(seq.len(), 4, None).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, per) in [0.1, 0.2, 0.4].into_iter().enumerate() {
        let ch = ForcedPerChannel::new(per, 100 + i as u64).unwrap();
        let out = transmit(&seq, &SideInfo::None, &plan, &ch, None, &TransmitConfig::new(ArqPolicy::FullReliable))
            .unwrap();
        let want = 1.0 / (1.0 - per);
        let err = (out.report.t_avg - want).abs() / want;
        pass &= err <= 0.02 && out.recovered == seq;
        detail.push(format!("PER {per}: T={:.4} vs {want:.4} ({:.2}%)", out.report.t_avg, 100.0 * err));
    }
    outcome(pass, detail.join(", "))
}

fn coding_chain() -> Outcome {
    let code = ConvCode::new(3, 0o7, 0o5).unwrap();
    let bpsk = Constellation::<f64>::new(2).unwrap();
    let n0 = noise_var(0.0);
    let codebook = exhaustive_codebook(12, 3, [0o7, 0o5]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut disagreements = 0;
    for trial in 0..1000u64 {
        let msg: Vec<bool> = (0..12).map(|_| rng.random()).collect();
        let (tx, _) = bpsk.modulate(&code.encode(&msg));
        let rx = awgn(&tx, n0, 77, trial);
        let llrs = bpsk.demod_llr(&rx, n0);
        let viterbi = code.viterbi_decode(&llrs).unwrap();
        if viterbi != ml_decode(&codebook, &llrs) {
            disagreements += 1;
        }
    }
    let crc = crc_oracle(b"123456789");
    let crc_lib = tokcom::phy::crc16(&tokcom::phy::bytes_to_bits(b"123456789"));

    let k7 = ConvCode::k7();
    let mut round_trip = true;
    for order in [2usize, 4, 16, 64] {
        let c = Constellation::<f64>::new(order).unwrap();
        for _ in 0..50 {
            let len = rng.random_range(1..200);
            let payload: Vec<bool> = (0..len).map(|_| rng.random()).collect();
            let (sym, pad) = c.modulate(&k7.encode(&crc_append(&payload)));
            let mut llrs = c.demod_llr(&sym, 0.1);
            llrs.truncate(llrs.len() - pad);
            let check = crc_check(&k7.viterbi_decode(&llrs).unwrap()).unwrap();
            round_trip &= check.ok && check.payload == payload;
        }
    }
    outcome(
        disagreements == 0 && crc == 0x29B1 && crc_lib == 0x29B1 && round_trip,
        format!("viterbi/ML disagreements={disagreements}/1000, crc=0x{crc_lib:04X} (oracle 0x{crc:04X}), noiseless M∈{{2,4,16,64}} round trip={round_trip}"),
    )
}

fn channel_calibration() -> Outcome {
    let bpsk = Constellation::<f64>::new(2).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let bits = 10_000_000usize;
    let chunk = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for snr in [0.0, 2.0, 4.0] {
        let n0 = noise_var(snr);
        let mut errors = 0usize;
        for c in 0..bits / chunk {
            let tx_bits: Vec<bool> = (0..chunk).map(|_| rng.random()).collect();
            let (sym, _) = bpsk.modulate(&tx_bits);
            let rx = awgn(&sym, n0, 1000 + snr as u64, c as u64);
            errors += bpsk.hard_bits(&rx).iter().zip(&tx_bits).filter(|(a, b)| a != b).count();
        }
        let ber = errors as f64 / bits as f64;
        let want = q_oracle((2.0 / n0).sqrt());
        let rel = (ber - want).abs() / want;
        pass &= rel <= 0.03;
        detail.push(format!("{snr} dB: BER={ber:.5} vs {want:.5} ({:.2}%)", 100.0 * rel));
    }

    let code = ConvCode::k7();
    let qam = Constellation::<f64>::new(16).unwrap();
    let packets = 100_000u64;
    let mut pers = Vec::new();
    let mut payload_rng = ChaCha8Rng::seed_from_u64(8);
    let payloads: Vec<Vec<bool>> = (0..packets).map(|_| (0..56).map(|_| payload_rng.random()).collect()).collect();
    for snr in [6.0, 6.5, 7.0, 7.5, 8.0, 8.5, 9.0] {
        let cfg = ChannelCfg::new(snr, 21);
        let failed = payloads
            .iter()
            .enumerate()
            .filter(|(i, p)| !send_packet(p, &code, &qam, &cfg, *i as u64).unwrap().crc_ok)
            .count();
        pers.push((snr, failed as f64 / packets as f64));
    }
    let decreasing = pers.windows(2).all(|w| w[1].1 < w[0].1);
    pass &= decreasing;
    detail.push(format!(
        "coded PER {}",
        pers.iter().map(|(s, p)| format!("{s}:{p:.5}")).collect::<Vec<_>>().join(" ")
    ));
    outcome(pass, detail.join(", "))
}

fn mask_and_predict_gain() -> Outcome {
    let q = 1024;
    let src = MarkovSource::sticky(q, 0.9).unwrap();
    let model = SourceModel::bidirectional(&src).unwrap();
    let chain = StickyChain { q: q as usize, stay: 0.9 };
    let runs = 200;
    let mut wins = 0;
    let (mut sum_after, mut sum_oracle, mut sum_before) = (0.0, 0.0, 0.0);
    for r in 0..runs {
        let seq = src.generate(256, &SideInfo::None, 10_000 + r).unwrap();
        let plan = PacketPlan::new(256, 4, Some(r)).unwrap();
        let ch = ForcedPerChannel::new(0.2, 500 + r).unwrap();
        let out =
            transmit(&seq, &SideInfo::None, &plan, &ch, Some(&model), &TransmitConfig::new(ArqPolicy::MaskAndPredict))
                .unwrap();
        let mut known: Vec<Option<u32>> = seq.ids().iter().map(|&x| Some(x)).collect();
        for log in out.report.packets.iter().filter(|p| !p.crc_ok) {
            for &p in &log.positions {
                known[p] = None;
            }
        }
        let oracle = chain.posterior_argmax(&known);
        let oracle_ter = oracle.iter().zip(seq.ids()).filter(|(a, b)| a != b).count() as f64 / 256.0;
        if out.report.ter_after < out.report.ter_before {
            wins += 1;
        }
        sum_after += out.report.ter_after;
        sum_oracle += oracle_ter;
        sum_before += out.report.ter_before;
    }
    let n = runs as f64;
    let (after, oracle, before) = (sum_after / n, sum_oracle / n, sum_before / n);
    let frac = wins as f64 / n;
    outcome(
        frac >= 0.95 && (after - oracle).abs() <= 0.005,
        format!("TER_after<TER_before in {wins}/{runs} runs; mean TER before={before:.4} after={after:.4} oracle={oracle:.4}"),
    )
}

fn tce_tradeoff() -> Outcome {
    let q = 1024;
    let src = MarkovSource::sticky(q, 0.9).unwrap();
    let model = SourceModel::bidirectional(&src).unwrap();
    let per = 0.2;
    let runs = 200u64;
    let mut t = [0.0f64; 2];
    let mut packets = 0.0;
    for r in 0..runs {
        let seq = src.generate(256, &SideInfo::None, 20_000 + r).unwrap();
        let plan = PacketPlan::new(256, 4, Some(r)).unwrap();
        let ch = ForcedPerChannel::new(per, 900 + r).unwrap();
        for (i, policy) in [ArqPolicy::FullReliable, ArqPolicy::MaskAndPredict].into_iter().enumerate() {
            let mut cfg = TransmitConfig::new(policy);
            cfg.mcs = McsPolicy::Fixed(McsEntry::qam16());
            let out = transmit(&seq, &SideInfo::None, &plan, &ch, Some(&model), &cfg).unwrap();
            t[i] += out.report.t_avg * plan.len() as f64;
        }
        packets += plan.len() as f64;
    }
    let params = SystemParams::<f64>::paper();
    let tce_fr = tce(&params, t[0] / packets).unwrap();
    let tce_mp = tce(&params, t[1] / packets).unwrap();
    let ratio = tce_mp / tce_fr;
    let want = 1.0 / (1.0 - per);
    let gain = ratio - 1.0;
    let within = (ratio - want).abs() <= 0.02 * want;
    let in_band = gain >= 0.20 && ratio <= 1.25 * 1.02;
    outcome(
        within && in_band,
        format!("TCE MaskAndPredict={tce_mp:.3} FullReliable={tce_fr:.3} ratio={ratio:.4} (target {want}), gain={:.1}%", 100.0 * gain),
    )
}

fn compression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut lossless = 0;
    for i in 0..1000u64 {
        let q = rng.random_range(2..40u32);
        let order = rng.random_range(0..3usize);
        let src = random_source(&mut rng, q, order);
        let n = rng.random_range(1..300usize);
        let seq = src.generate(n, &SideInfo::None, i).unwrap();
        let model: Box<dyn ProbModel> = if i % 2 == 0 {
            Box::new(SourceModel::new(&src).unwrap())
        } else {
            let corpus: Vec<TokenSequence> = (0..3).map(|k| src.generate(200, &SideInfo::None, 10_000 + 3 * i + k).unwrap()).collect();
            Box::new(train_markov(&corpus, order.max(1), 0.05).unwrap())
        };
        let bits = ac_encode(model.as_ref(), &seq, &SideInfo::None).unwrap();
        if ac_decode(model.as_ref(), &bits, n, &SideInfo::None).unwrap() == seq {
            lossless += 1;
        }
    }

    let dense = random_source(&mut ChaCha8Rng::seed_from_u64(7), 16, 1);
    let h = dense.entropy_rate(&SideInfo::None).unwrap();
    let seq = dense.generate(100_000, &SideInfo::None, 1).unwrap();
    let model = SourceModel::new(&dense).unwrap();
    let bits = ac_encode(&model, &seq, &SideInfo::None).unwrap();
    let rate = bits.len() as f64 / seq.len() as f64;
    let rel = (rate - h).abs() / h;

    let uni_seq = MarkovSource::uniform(1024).unwrap().generate(256, &SideInfo::None, 3).unwrap();
    let uni_bits = ac_encode(&UniformModel::new(1024).unwrap(), &uni_seq, &SideInfo::None).unwrap();
    let uni_rate = uni_bits.len() as f64 / 256.0;

    outcome(
        lossless == 1000 && rel <= 0.01 && (10.0..=10.02).contains(&uni_rate),
        format!(
            "lossless {lossless}/1000; order-1 rate {rate:.4} vs H {h:.4} ({:.3}%); uniform Q=1024 rate {uni_rate:.4}",
            100.0 * rel
        ),
    )
}

fn semantic_mapping() -> Outcome {
    let m = 8;
    let points = psk_points::<f64>(m);
    let conf = build_confusion(&points, 3.0, ConfusionMethod::Analytic { fallback_seed: 0, fallback_trials: 1 })
        .unwrap()
        .matrix;
    let prior = uniform_prior::<f64>(m);
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for inst in 0..20u64 {
        let emb: Vec<Vec<f64>> = (0..m).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let dist = SemanticDistance::<f64>::from_embeddings(&emb).unwrap().matrix;
        let exact = brute_force(&conf, &dist, &prior).unwrap();
        let oracle = permutation_oracle_min(&conf, &dist, &prior);
        let got = optimize(
            &conf,
            &dist,
            &prior,
            Method::Anneal { seed: inst, schedule: AnnealSchedule::default() },
            8,
        )
        .unwrap();
        assert!((exact.distortion - oracle).abs() < 1e-12, "brute force disagrees with the enumeration oracle");
        worst = worst.max((got.distortion - oracle) / oracle);
    }

    // circulant confusion and distance share the rotation symmetry
    let r = |n: i64, d: i64| Rational::new(n, d);
    let circ = |w: &[Rational]| Matrix::from_fn(m, |i, j| w[(j + m - i) % m]);
    let conf_q = circ(&[r(5, 8), r(1, 8), r(1, 32), r(1, 64), r(1, 64), r(1, 64), r(1, 32), r(1, 8)]);
    let dist_q = circ(&[r(0, 1), r(1, 7), r(2, 7), r(3, 7), r(4, 7), r(3, 7), r(2, 7), r(1, 7)]);
    let prior_q = uniform_prior::<Rational>(m);
    let mut invariant = true;
    let mut prng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut pi: Vec<usize> = (0..m).collect();
        rand::seq::SliceRandom::shuffle(pi.as_mut_slice(), &mut prng);
        let shift = prng.random_range(1..m);
        // g ∘ π ∘ g⁻¹ with g a rotation
        let conj: Vec<usize> = (0..m).map(|t| (pi[(t + m - shift) % m] + shift) % m).collect();
        let a = expected_distortion(&Assignment::new(pi).unwrap(), &conf_q, &dist_q, &prior_q).unwrap();
        let b = expected_distortion(&Assignment::new(conj).unwrap(), &conf_q, &dist_q, &prior_q).unwrap();
        invariant &= a == b;
    }
    let flat = Matrix::from_fn(m, |i, j| if i == j { r(0, 1) } else { r(1, 3) });
    let first = expected_distortion(&Assignment::identity(m), &conf_q, &flat, &prior_q).unwrap();
    let mut pi: Vec<usize> = (0..m).collect();
    for _ in 0..200 {
        rand::seq::SliceRandom::shuffle(pi.as_mut_slice(), &mut prng);
        invariant &= expected_distortion(&Assignment::new(pi.clone()).unwrap(), &conf_q, &flat, &prior_q).unwrap() == first;
    }
    outcome(
        worst <= 0.05 && invariant,
        format!("anneal worst gap to optimum over 20 instances {:.3}%; symmetric invariance exact={invariant}", 100.0 * worst),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_tokcom");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"seed": 4, "source": {"q": 64, "n": 64, "sequences": 3},
            "predictor": {"kind": "markov", "train_sequences": 20},
            "sweep": {"snr_db": [5.0, 7.0], "seeds": [1, 2]},
            "link": {"packet_log": true},
            "semmap": {"order": 16, "restarts": 2, "steps": 2000}}"#,
    )
    .unwrap();
    let commands = ["gen-source", "train", "simulate", "sweep", "compress", "semmap"];
    let run = |tag: &str, cmd: &str| -> std::path::PathBuf {
        let out = dir.path().join(format!("{tag}-{cmd}"));
        let status = Command::new(bin)
            .args([cmd, "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"])
            .status()
            .unwrap();
        assert!(status.success(), "{cmd} failed");
        out
    };
    let mut identical = true;
    let mut compared = 0;
    for cmd in commands {
        let a = run("a", cmd);
        let b = run("b", cmd);
        for (name, bytes) in read_dir_sorted(&a) {
            compared += 1;
            identical &= std::fs::read(b.join(&name)).map(|o| o == bytes).unwrap_or(false);
        }
    }
    let a = run("a", "sweep");
    let report = |tag: &str| {
        let out = dir.path().join(format!("report-{tag}"));
        let ok = Command::new(bin)
            .args(["report", "--input", a.join("results.csv").to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap()
            .success();
        assert!(ok);
        out
    };
    let (ra, rb) = (report("a"), report("b"));
    for (name, bytes) in read_dir_sorted(&ra) {
        compared += 1;
        identical &= std::fs::read(rb.join(&name)).map(|o| o == bytes).unwrap_or(false);
    }
    outcome(identical, format!("{compared} output files compared across 7 commands, byte-identical={identical}"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn round_to(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).round() / s
}

fn random_source(rng: &mut ChaCha8Rng, q: u32, order: usize) -> MarkovSource {
    let qs = q as usize;
    let contexts = qs.pow(order as u32);
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let w: Vec<f64> = (0..qs).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let transition: Vec<f64> = (0..contexts).flat_map(|_| row(rng)).collect();
    let initial = vec![1.0 / contexts as f64; contexts];
    MarkovSource::new(q, order, MarkovTable::new(transition, initial)).unwrap()
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("metric arithmetic", Duration::from_secs(1), metric_arithmetic),
        ("retransmission law", Duration::from_secs(60), retransmission_law),
        ("coding chain correctness", Duration::from_secs(60), coding_chain),
        ("channel calibration", Duration::from_secs(600), channel_calibration),
        ("mask-and-predict gain", Duration::from_secs(600), mask_and_predict_gain),
        ("TCE vs reliability tradeoff", Duration::from_secs(600), tce_tradeoff),
        ("compression", Duration::from_secs(600), compression),
        ("semantic mapping", Duration::from_secs(60), semantic_mapping),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check)
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        let took = start.elapsed();
        let pass = result.pass && took <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name} [{:.2}s, budget {}s]: {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
