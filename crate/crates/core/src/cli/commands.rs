use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::RngCore;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde_json::json;

use super::config::*;
use super::output::{Cell, OutDir, Table};
use super::svg::{line_chart, Series};
use super::{Cli, CliError, Command};
use crate::entropy_coding::{ac_decode, ac_encode, write_compressed, CompressedHeader};
use crate::link::{
    transmit, write_packet_log, ArqPolicy, CleanChannel, ForcedPerChannel, LinkReport, McsEntry, McsPolicy, McsTable,
    PacketChannel, PacketPlan, PhyChannel, TransmitConfig,
};
use crate::metrics::{self, ComputeProfile, SystemParams};
use crate::phy::{ChannelCfg, Constellation, ConvCode};
use crate::predictor::{
    bidirectional_combine, train_markov, train_unigram, BridgeModel, FillSchedule, MarkovModel, ProbModel,
    SourceModel, UniformModel,
};
use crate::rng::{derive_seed, substream, Purpose};
use crate::semmap::{
    brute_force, build_confusion, expected_distortion, optimize, psk_points, uniform_prior, AnnealSchedule,
    Assignment, ConfusionMethod, Method, SemanticDistance,
};
use crate::tokens::{MarkovSource, SideInfo, TokenSequence};

const LABEL_BITS: u32 = 7;

fn rt(e: impl std::fmt::Display) -> CliError {
    CliError::runtime(e)
}

pub fn dispatch(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut out = OutDir::create(&cli.out)?;
    let mut manifest = json!({
        "tool": "tokcom",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
    });
    match &cli.command {
        Command::GenSource => gen_source(cfg, cli, &mut out)?,
        Command::Train => train(cfg, cli, &mut out)?,
        Command::Simulate => {
            let cells = vec![(cfg.phy.snr_db, cfg.seed)];
            sweep(cfg, cli, &mut out, &cells, &mut manifest)?
        }
        Command::Sweep => {
            let cells: Vec<(f64, u64)> =
                cfg.sweep.snr_db.iter().flat_map(|&s| cfg.sweep.seeds.iter().map(move |&seed| (s, seed))).collect();
            sweep(cfg, cli, &mut out, &cells, &mut manifest)?
        }
        Command::Compress => compress(cfg, cli, &mut out)?,
        Command::Semmap => semmap(cfg, cli, &mut out)?,
        Command::Report { input } => {
            let path = input.clone().unwrap_or_else(|| cli.out.join("results.csv"));
            report(&path, &mut out)?
        }
    }
    manifest["command"] = json!(command_name(&cli.command));
    manifest["files"] = json!(out.written());
    out.write("resolved_config.json", cfg.to_json().as_bytes())?;
    out.write("manifest.json", (serde_json::to_string_pretty(&manifest).map_err(rt)? + "\n").as_bytes())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenSource => "gen-source",
        Command::Train => "train",
        Command::Simulate => "simulate",
        Command::Sweep => "sweep",
        Command::Compress => "compress",
        Command::Semmap => "semmap",
        Command::Report { .. } => "report",
    }
}

pub fn build_source(cfg: &SourceCfg) -> Result<MarkovSource, CliError> {
    let single = |stay: f64| match cfg.kind {
        SourceKind::Sticky => MarkovSource::sticky(cfg.q, stay),
        SourceKind::Uniform => MarkovSource::uniform(cfg.q),
        SourceKind::Cycle => MarkovSource::cycle(cfg.q),
    };
    if cfg.class_stays.is_empty() {
        return single(cfg.stay).map_err(|e| CliError::Schema(e.to_string()));
    }
    if cfg.kind != SourceKind::Sticky {
        return Err(CliError::Schema("class_stays requires a sticky source".into()));
    }
    let mut tables = BTreeMap::new();
    for (label, &stay) in cfg.class_stays.iter().enumerate() {
        let src = single(stay).map_err(|e| CliError::Schema(e.to_string()))?;
        tables.insert(label as u32, src.table(&SideInfo::None).map_err(rt)?.clone());
    }
    MarkovSource::class_conditional(cfg.q, 1, tables).map_err(|e| CliError::Schema(e.to_string()))
}

fn side_for(cfg: &SourceCfg, index: usize) -> SideInfo {
    if cfg.class_stays.is_empty() {
        SideInfo::None
    } else {
        SideInfo::ClassLabel { label: (index % cfg.class_stays.len()) as u32, bits: LABEL_BITS }
    }
}

/// Sequence `index` of the evaluation draw for `seed`, with its side info.
pub fn eval_sequence(
    src: &MarkovSource,
    cfg: &SourceCfg,
    seed: u64,
    index: usize,
) -> Result<(TokenSequence, SideInfo), CliError> {
    let side = side_for(cfg, index);
    let seq = src.generate(cfg.n, &side, derive_seed(seed, index as u64)).map_err(rt)?;
    Ok((seq, side))
}

fn training_corpus(src: &MarkovSource, cfg: &ExperimentConfig) -> Result<Vec<TokenSequence>, CliError> {
    (0..cfg.predictor.train_sequences)
        .map(|r| {
            let seed = substream(cfg.seed, Purpose::Training, r as u64).next_u64();
            src.generate(cfg.source.n, &side_for(&cfg.source, r), seed).map_err(rt)
        })
        .collect()
}

fn reversed(corpus: &[TokenSequence]) -> Result<Vec<TokenSequence>, CliError> {
    corpus
        .iter()
        .map(|s| TokenSequence::new(s.q(), s.ids().iter().rev().copied().collect()).map_err(rt))
        .collect()
}

fn load_markov(path: &str) -> Result<MarkovModel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{path}: {e}")))?;
    MarkovModel::from_json(&text).map_err(rt)
}

/// Builds the configured predictor. `bidirectional` asks for a model that can
/// fill gaps; otherwise a causal one is returned.
pub fn build_model(
    cfg: &ExperimentConfig,
    src: &MarkovSource,
    bidirectional: bool,
) -> Result<Arc<dyn ProbModel>, CliError> {
    let p = &cfg.predictor;
    let q = cfg.source.q;
    let model: Arc<dyn ProbModel> = match p.kind {
        PredictorKind::Exact if bidirectional => Arc::new(SourceModel::bidirectional(src).map_err(rt)?),
        PredictorKind::Exact => Arc::new(SourceModel::new(src).map_err(rt)?),
        PredictorKind::Uniform => Arc::new(UniformModel::new(q).map_err(rt)?),
        PredictorKind::Unigram => Arc::new(train_unigram(&training_corpus(src, cfg)?, p.alpha).map_err(rt)?),
        PredictorKind::Markov => {
            let corpus = training_corpus(src, cfg)?;
            let fwd = Arc::new(train_markov(&corpus, p.order, p.alpha).map_err(rt)?);
            if bidirectional {
                let bwd = Arc::new(train_markov(&reversed(&corpus)?, p.order, p.alpha).map_err(rt)?);
                Arc::new(bidirectional_combine(fwd, bwd).map_err(rt)?)
            } else {
                fwd
            }
        }
        PredictorKind::File => {
            let fwd = Arc::new(load_markov(p.model_path.as_deref().expect("validated"))?);
            match (&p.backward_model_path, bidirectional) {
                (Some(b), true) => Arc::new(bidirectional_combine(fwd, Arc::new(load_markov(b)?)).map_err(rt)?),
                _ => fwd,
            }
        }
        PredictorKind::Bridge => {
            let bits = if cfg.source.class_stays.is_empty() { 0 } else { LABEL_BITS };
            let m = match &p.address {
                Some(addr) => BridgeModel::connect_tcp(addr, q, bits),
                None => BridgeModel::spawn(&p.command[0], &p.command[1..], q, bits),
            };
            Arc::new(m.map_err(rt)?)
        }
    };
    if model.q() != q {
        return Err(CliError::Runtime(format!("model codebook {} does not match source {q}", model.q())));
    }
    Ok(model)
}

fn gen_source(cfg: &ExperimentConfig, cli: &Cli, out: &mut OutDir) -> Result<(), CliError> {
    let src = build_source(&cfg.source)?;
    let mut seqs = Vec::new();
    let mut table = Table::new(vec!["seq_id", "label", "n", "tokens"]);
    for r in 0..cfg.source.sequences {
        let (seq, side) = eval_sequence(&src, &cfg.source, cfg.seed, r)?;
        let tokens = seq.ids().iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        let label = side.label().map_or(Cell::S(String::new()), |l| Cell::U(l as u64));
        table.push(vec![Cell::U(r as u64), label, Cell::U(seq.len() as u64), Cell::S(tokens)]);
        seqs.push(seq);
    }
    let mut bytes = Vec::new();
    crate::tokens::write_corpus(&mut bytes, cfg.source.q, &seqs).map_err(rt)?;
    out.write("corpus.tokc", &bytes)?;
    out.write(&Table::file_name("sequences", cli.format), &table.render(cli.format)?)
}

fn train(cfg: &ExperimentConfig, cli: &Cli, out: &mut OutDir) -> Result<(), CliError> {
    let src = build_source(&cfg.source)?;
    let corpus = training_corpus(&src, cfg)?;
    let p = &cfg.predictor;
    let fwd = train_markov(&corpus, p.order, p.alpha).map_err(rt)?;
    let bwd = train_markov(&reversed(&corpus)?, p.order, p.alpha).map_err(rt)?;
    out.write("model.json", fwd.to_json().as_bytes())?;
    out.write("model_backward.json", bwd.to_json().as_bytes())?;
    let mut held_out = 0.0;
    for r in 0..cfg.source.sequences {
        let (seq, side) = eval_sequence(&src, &cfg.source, cfg.seed, r)?;
        held_out += crate::predictor::cross_entropy(&fwd, &seq, &side).map_err(rt)?;
    }
    held_out /= cfg.source.sequences as f64;
    let entropy = mean_entropy_rate(&src, &cfg.source)?;
    let mut table = Table::new(vec!["order", "alpha", "train_sequences", "train_tokens", "cross_entropy", "entropy_rate"]);
    table.push(vec![
        Cell::U(p.order as u64),
        Cell::F(p.alpha),
        Cell::U(corpus.len() as u64),
        Cell::U(corpus.iter().map(|s| s.len() as u64).sum()),
        Cell::F(held_out),
        Cell::F(entropy),
    ]);
    out.write(&Table::file_name("train", cli.format), &table.render(cli.format)?)
}

fn mean_entropy_rate(src: &MarkovSource, cfg: &SourceCfg) -> Result<f64, CliError> {
    let classes = cfg.class_stays.len().max(1);
    let mut total = 0.0;
    for c in 0..classes {
        total += src.entropy_rate(&side_for(cfg, c)).map_err(rt)?;
    }
    Ok(total / classes as f64)
}

fn policy(cfg: &LinkCfg) -> ArqPolicy {
    match cfg.policy {
        PolicyKind::FullReliable => ArqPolicy::FullReliable,
        PolicyKind::MaskAndPredict => ArqPolicy::MaskAndPredict,
        PolicyKind::SelectiveRetx => ArqPolicy::SelectiveRetx { theta: cfg.theta, max_rounds: cfg.max_rounds },
    }
}

fn conv_code(cfg: &ExperimentConfig) -> Result<ConvCode, CliError> {
    let (g0, g1) = cfg.generators()?;
    ConvCode::new(cfg.phy.constraint_length, g0, g1).map_err(|e| CliError::Schema(e.to_string()))
}

fn load_labels(path: &str, m: usize) -> Result<Vec<usize>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{path}: {e}")))?;
    let mut labels = vec![usize::MAX; m];
    for rec in rdr.records() {
        let rec = rec.map_err(rt)?;
        let field = |i: usize| -> Result<usize, CliError> {
            rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| CliError::Runtime(format!("{path}: bad row")))
        };
        let (t, p) = (field(0)?, field(1)?);
        if t >= m {
            return Err(CliError::Runtime(format!("{path}: token {t} outside {m} labels")));
        }
        labels[t] = p;
    }
    Ok(labels)
}

struct CellOutcome {
    row: Vec<Cell>,
    log: Vec<u8>,
}

fn system_params(cfg: &ExperimentConfig) -> SystemParams<f64> {
    SystemParams {
        h: cfg.metrics.h,
        w: cfg.metrics.w,
        n: cfg.source.n as u64,
        q: cfg.source.q as u64,
        code_rate: 0.5,
        mod_order: cfg.phy.modulation as u32,
        bandwidth_hz: cfg.phy.bandwidth_hz,
        tokens_per_packet: cfg.link.tokens_per_packet as u64,
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    src: &MarkovSource,
    model: Option<&dyn ProbModel>,
    labels: Option<&Vec<usize>>,
    snr_db: f64,
    seed: u64,
) -> Result<CellOutcome, CliError> {
    let code = conv_code(cfg)?;
    let entry = McsEntry::new(cfg.phy.modulation, code);
    let channel: Box<dyn PacketChannel> = match cfg.phy.channel {
        ChannelKind::Awgn => {
            let cc = ChannelCfg::new(snr_db, seed).with_bandwidth(cfg.phy.bandwidth_hz).map_err(rt)?;
            let ch = PhyChannel::new(cc);
            Box::new(match labels {
                Some(l) => ch.with_labels(l.clone()),
                None => ch,
            })
        }
        ChannelKind::Forced => Box::new(ForcedPerChannel::new(cfg.phy.forced_per, seed).map_err(rt)?),
        ChannelKind::Clean => Box::new(CleanChannel),
    };
    let mut tc = TransmitConfig::new(policy(&cfg.link));
    tc.mcs = match cfg.link.mcs {
        McsKind::Fixed => McsPolicy::Fixed(entry),
        McsKind::Adaptive => McsPolicy::Adaptive(McsTable::default()),
    };
    tc.snr_db = snr_db;
    tc.schedule = FillSchedule::cosine(cfg.predictor.fill_iterations).map_err(rt)?;
    tc.max_attempts = cfg.link.max_attempts;
    tc.pixels = cfg.metrics.h * cfg.metrics.w;
    tc.bandwidth_hz = cfg.phy.bandwidth_hz;
    tc.compute = Some(ComputeProfile {
        workload_tflops: cfg.metrics.workload_tflops,
        device_tops: cfg.metrics.device_tops,
        precision_factor: cfg.metrics.precision_factor,
    });

    let mut reports: Vec<LinkReport> = Vec::new();
    let mut log = Vec::new();
    for r in 0..cfg.source.sequences {
        let (seq, side) = eval_sequence(src, &cfg.source, seed, r)?;
        let plan = PacketPlan::new(seq.len(), cfg.link.tokens_per_packet, cfg.link.interleave.then_some(seed))
            .map_err(rt)?;
        tc.run_id = r as u64;
        let out = transmit(&seq, &side, &plan, channel.as_ref(), model, &tc).map_err(rt)?;
        if cfg.link.packet_log {
            write_packet_log(&mut log, r as u64, &out.report.packets, false).map_err(rt)?;
        }
        reports.push(out.report);
    }
    let runs = reports.len() as f64;
    let transmissions: u64 = reports.iter().map(|r| r.transmissions).sum();
    let failures: u64 = reports.iter().map(|r| r.failures).sum();
    let packets: u64 = reports.iter().map(|r| r.packets.len() as u64).sum();
    let t_avg = transmissions as f64 / packets as f64;
    let mean = |f: fn(&LinkReport) -> f64| reports.iter().map(f).sum::<f64>() / runs;
    let params = system_params(cfg);
    let tce = metrics::tce(&params, t_avg).map_err(rt)?;
    let row = vec![
        Cell::F(snr_db),
        Cell::F(failures as f64 / transmissions as f64),
        Cell::F(mean(|r| r.ter_before)),
        Cell::F(mean(|r| r.ter_after)),
        Cell::F(t_avg),
        Cell::F(tce),
        Cell::F(1.0 / tce),
        Cell::F(mean(|r| r.comm_time_s) * 1e3),
        Cell::F(mean(|r| r.compute_time_s) * 1e3),
        Cell::S(policy(&cfg.link).name().to_string()),
        Cell::U(seed),
    ];
    Ok(CellOutcome { row, log })
}

pub const RESULT_COLUMNS: [&str; 11] = [
    "snr_db",
    "per",
    "ter_before",
    "ter_after",
    "t_avg",
    "tce",
    "bpp",
    "comm_time_ms",
    "compute_time_ms",
    "policy",
    "seed",
];

fn sweep(
    cfg: &ExperimentConfig,
    cli: &Cli,
    out: &mut OutDir,
    cells: &[(f64, u64)],
    manifest: &mut serde_json::Value,
) -> Result<(), CliError> {
    let src = build_source(&cfg.source)?;
    let pol = policy(&cfg.link);
    let needs_model = pol != ArqPolicy::FullReliable || cfg.link.mcs == McsKind::Adaptive;
    let model = if needs_model { Some(build_model(cfg, &src, true)?) } else { None };
    let labels = match &cfg.phy.labels_path {
        Some(p) => Some(load_labels(p, cfg.phy.modulation)?),
        None => None,
    };
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(rt)?;
    let results: Vec<Result<CellOutcome, CliError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(snr, seed)| run_cell(cfg, &src, model.as_deref(), labels.as_ref(), snr, seed))
            .collect()
    });
    let mut table = Table::new(RESULT_COLUMNS.to_vec());
    let mut log = Vec::new();
    if cfg.link.packet_log {
        write_packet_log(&mut log, 0, &[], true).map_err(rt)?;
    }
    for res in results {
        let cell = res?;
        table.push(cell.row);
        log.extend(cell.log);
    }
    manifest["cells"] =
        json!(cells.iter().enumerate().map(|(i, (s, seed))| json!({"index": i, "snr_db": s, "seed": seed})).collect::<Vec<_>>());
    out.write(&Table::file_name("results", cli.format), &table.render(cli.format)?)?;
    if cfg.link.packet_log {
        out.write("packets.csv", &log)?;
    }
    Ok(())
}

fn compress(cfg: &ExperimentConfig, cli: &Cli, out: &mut OutDir) -> Result<(), CliError> {
    let src = build_source(&cfg.source)?;
    let model = build_model(cfg, &src, false)?;
    let mut table = Table::new(vec!["seq_id", "n", "bits", "bits_per_token", "entropy_rate", "lossless"]);
    for r in 0..cfg.source.sequences {
        let (seq, side) = eval_sequence(&src, &cfg.source, cfg.seed, r)?;
        let bits = ac_encode(model.as_ref(), &seq, &side).map_err(rt)?;
        let back = ac_decode(model.as_ref(), &bits, seq.len(), &side).map_err(rt)?;
        let header = CompressedHeader { q: seq.q(), n: seq.len() as u32, label: side.label() };
        let mut bytes = Vec::new();
        write_compressed(&mut bytes, &header, &bits).map_err(rt)?;
        out.write(&format!("seq{r:04}.tokz"), &bytes)?;
        table.push(vec![
            Cell::U(r as u64),
            Cell::U(seq.len() as u64),
            Cell::U(bits.len() as u64),
            Cell::F(bits.len() as f64 / seq.len() as f64),
            Cell::F(src.entropy_rate(&side).map_err(rt)?),
            Cell::B(back == seq),
        ]);
    }
    out.write(&Table::file_name("compress", cli.format), &table.render(cli.format)?)
}

/// Token embeddings for the semmap command.
pub fn embeddings(cfg: &SemmapCfg, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, Purpose::Embedding, 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    match cfg.embedding {
        EmbeddingKind::Random => (0..cfg.order).map(|_| (0..cfg.dim).map(|_| normal()).collect()).collect(),
        EmbeddingKind::Clusters => {
            let centers: Vec<Vec<f64>> =
                (0..cfg.clusters).map(|_| (0..cfg.dim).map(|_| 4.0 * normal()).collect()).collect();
            (0..cfg.order).map(|t| centers[t % cfg.clusters].iter().map(|c| c + 0.5 * normal()).collect()).collect()
        }
    }
}

fn semmap(cfg: &ExperimentConfig, cli: &Cli, out: &mut OutDir) -> Result<(), CliError> {
    let sm = &cfg.semmap;
    let points = if sm.psk {
        psk_points::<f64>(sm.order)
    } else {
        Constellation::<f64>::new(sm.order).map_err(rt)?.points().to_vec()
    };
    let method = match sm.confusion {
        ConfusionKind::Analytic => ConfusionMethod::Analytic { fallback_seed: cfg.seed, fallback_trials: sm.trials },
        ConfusionKind::MonteCarlo => ConfusionMethod::MonteCarlo { seed: cfg.seed, trials: sm.trials },
    };
    let conf = build_confusion(&points, sm.snr_db, method).map_err(rt)?;
    let dist = SemanticDistance::<f64>::from_embeddings(&embeddings(sm, cfg.seed)).map_err(rt)?;
    let prior = uniform_prior::<f64>(sm.order);
    let best = match sm.method {
        SemmapMethodKind::BruteForce => brute_force(&conf.matrix, &dist.matrix, &prior),
        SemmapMethodKind::Greedy => optimize(&conf.matrix, &dist.matrix, &prior, Method::Greedy, 1),
        SemmapMethodKind::Anneal => {
            let schedule = AnnealSchedule { initial_temp: 1.0, cooling: sm.cooling, steps: sm.steps };
            optimize(&conf.matrix, &dist.matrix, &prior, Method::Anneal { seed: cfg.seed, schedule }, sm.restarts)
        }
    }
    .map_err(rt)?;
    let identity = expected_distortion(&Assignment::identity(sm.order), &conf.matrix, &dist.matrix, &prior).map_err(rt)?;
    let mut rng = substream(cfg.seed, Purpose::Optimizer, u32::MAX as u64);
    let samples = 1000;
    let mut random_total = 0.0;
    for _ in 0..samples {
        let mut p: Vec<usize> = (0..sm.order).collect();
        p.shuffle(&mut rng);
        let a = Assignment::new(p).expect("shuffle is a permutation");
        random_total += expected_distortion(&a, &conf.matrix, &dist.matrix, &prior).map_err(rt)?;
    }
    let mut csv = Vec::new();
    best.assignment.write_csv(&points, &mut csv).map_err(rt)?;
    out.write("assignment.csv", &csv)?;
    let mut table =
        Table::new(vec!["order", "snr_db", "method", "distortion", "identity_distortion", "random_mean_distortion", "fallback"]);
    table.push(vec![
        Cell::U(sm.order as u64),
        Cell::F(sm.snr_db),
        Cell::S(format!("{:?}", sm.method).to_lowercase()),
        Cell::F(best.distortion),
        Cell::F(identity),
        Cell::F(random_total / samples as f64),
        Cell::B(conf.fallback),
    ]);
    out.write(&Table::file_name("semmap", cli.format), &table.render(cli.format)?)
}

fn report(path: &std::path::Path, out: &mut OutDir) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(rt)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Runtime(format!("missing column {name}")))
    };
    let (snr, pol) = (col("snr_db")?, col("policy")?);
    let metrics = ["tce", "ter_before", "ter_after", "per"];
    let idx: Vec<usize> = metrics.iter().map(|m| col(m)).collect::<Result<_, _>>()?;
    // policy -> snr -> (sum per metric, count)
    let mut acc: BTreeMap<String, Vec<(f64, Vec<f64>, usize)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(rt)?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i].parse().map_err(|_| CliError::Runtime(format!("bad number {:?}", &rec[i])))
        };
        let x = num(snr)?;
        let vals: Vec<f64> = idx.iter().map(|&i| num(i)).collect::<Result<_, _>>()?;
        let series = acc.entry(rec[pol].to_string()).or_default();
        match series.iter_mut().find(|(s, _, _)| *s == x) {
            Some((_, sums, n)) => {
                sums.iter_mut().zip(&vals).for_each(|(s, v)| *s += v);
                *n += 1;
            }
            None => series.push((x, vals, 1)),
        }
    }
    let series_for = |k: usize, suffix: &str| -> Vec<Series> {
        acc.iter()
            .map(|(name, pts)| {
                let mut points: Vec<(f64, f64)> = pts.iter().map(|(x, s, n)| (*x, s[k] / *n as f64)).collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series { name: format!("{name}{suffix}"), points }
            })
            .collect()
    };
    out.write("tce.svg", line_chart("TCE vs SNR", "SNR (dB)", "TCE (px/bit)", &series_for(0, "")).as_bytes())?;
    let mut ter = series_for(1, " before");
    ter.extend(series_for(2, " after"));
    out.write("ter.svg", line_chart("TER vs SNR", "SNR (dB)", "TER", &ter).as_bytes())?;
    out.write("per.svg", line_chart("PER vs SNR", "SNR (dB)", "PER", &series_for(3, "")).as_bytes())
}
