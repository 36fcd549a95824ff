//! The four distributed bootstrap protocols, run on the virtual fabric.
//!
//! * FSD: the root draws every resample and ships shares to the workers,
//!   which return their sample means.
//! * DBSR: the root sends the dataset out, every rank resamples its N/P
//!   share, workers return the full resamples.
//! * DBSA: like DBSR, but workers return only `(m1, m2)` of their means.
//! * DDRS: each rank holds one D/P shard; all ranks replay one shared index
//!   stream and the root sums per-sample partial sums.
//!
//! Memory is accounted in 4-byte floats: dataset copies, resample buffers,
//! received payloads and per-sample scratch. Means are folded into a
//! running accumulator as soon as they are computed, and each resample
//! buffer is released right after its mean is taken.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{CostParams, Dataset, ExperimentConfig};
use crate::costmodel::{predict, CostBreakdown, DDRS_PAIR_FLOATS};
use crate::error::{Error, Result};
use crate::prng::{rank_substream, rng_new, RngState};
use crate::simnet::{Channel, Comm, Fabric, FabricLedger};
use crate::stats::{
    bootstrap_means, bootstrap_variance_from_stream, pool_stats, population_variance, sequential_bootstrap_oracle,
    variance_from_stats, MeanAccumulator, SummaryStats, VarianceEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Full sample distribution.
    Fsd,
    /// Data broadcast, sample return.
    Dbsr,
    /// Data broadcast, statistic aggregation.
    Dbsa,
    /// Distributed data, synchronized resampling stream.
    Ddrs,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [StrategyKind::Fsd, StrategyKind::Dbsr, StrategyKind::Dbsa, StrategyKind::Ddrs];

    /// Planner tie-break order, most preferred first.
    pub const PREFERENCE: [StrategyKind; 4] =
        [StrategyKind::Dbsa, StrategyKind::Ddrs, StrategyKind::Dbsr, StrategyKind::Fsd];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Fsd => "FSD",
            StrategyKind::Dbsr => "DBSR",
            StrategyKind::Dbsa => "DBSA",
            StrategyKind::Ddrs => "DDRS",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fsd" | "a" => Ok(StrategyKind::Fsd),
            "dbsr" | "b" => Ok(StrategyKind::Dbsr),
            "dbsa" | "c" => Ok(StrategyKind::Dbsa),
            "ddrs" | "d" => Ok(StrategyKind::Ddrs),
            other => Err(Error::Config(format!("unknown strategy '{other}' (expected fsd, dbsr, dbsa or ddrs)"))),
        }
    }
}

/// What the ledger observed during one strategy run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measured {
    pub bytes_by_channel: BTreeMap<Channel, u64>,
    pub total_bytes: u64,
    pub peak_floats_per_rank: Vec<u64>,
    pub points_per_rank: Vec<u64>,
}

impl Measured {
    fn from_ledger(ledger: &FabricLedger) -> Self {
        Measured {
            bytes_by_channel: ledger.bytes_by_channel.clone(),
            total_bytes: ledger.total_bytes,
            peak_floats_per_rank: ledger.peak_floats(),
            points_per_rank: ledger.points(),
        }
    }

    pub fn channel(&self, channel: Channel) -> u64 {
        self.bytes_by_channel.get(&channel).copied().unwrap_or(0)
    }
}

/// Component-wise agreement between measurement and closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionMatch {
    pub data_out: bool,
    pub results_back: bool,
    pub verification: bool,
    pub memory: bool,
    pub points: bool,
}

impl PredictionMatch {
    pub fn all(&self) -> bool {
        self.data_out && self.results_back && self.verification && self.memory && self.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub kind: StrategyKind,
    pub config: ExperimentConfig,
    pub estimate: VarianceEstimate,
    pub measured: Measured,
    pub predicted: CostBreakdown,
}

impl StrategyReport {
    pub fn measured_bytes(&self) -> u64 {
        self.measured.total_bytes
    }

    pub fn prediction_match(&self) -> PredictionMatch {
        let m = &self.measured;
        let p = &self.predicted;
        let ranks = m.peak_floats_per_rank.len();
        PredictionMatch {
            data_out: m.channel(Channel::DataOut) == p.bytes_data_out,
            results_back: m.channel(Channel::ResultsBack) == p.bytes_results_back,
            verification: m.channel(Channel::Verification) == p.bytes_verification,
            memory: (0..ranks).all(|r| m.peak_floats_per_rank[r] == p.peak_floats_for_rank(r)),
            points: (0..ranks).all(|r| m.points_per_rank[r] == p.points_for_rank(r)),
        }
    }
}

/// Test hook for the sharded strategy.
#[derive(Debug, Clone, Copy, Default)]
pub struct DdrsOptions {
    /// Advance this rank's stream by one extra step before sampling, which
    /// desynchronizes it from the others.
    pub desync_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdrsRun {
    pub report: StrategyReport,
    /// Summed partial counts per sample, as checked by the root.
    pub global_counts: Vec<u64>,
}

fn check_fabric(fabric: &Fabric, config: &ExperimentConfig) -> Result<()> {
    if fabric.size() != config.num_processes {
        return Err(Error::Config(format!(
            "fabric has {} processes but P={}",
            fabric.size(),
            config.num_processes
        )));
    }
    Ok(())
}

fn root_estimate(outputs: Vec<Option<VarianceEstimate>>) -> Result<VarianceEstimate> {
    outputs
        .into_iter()
        .next()
        .flatten()
        .ok_or_else(|| Error::Protocol("root produced no estimate".into()))
}

/// Draws `count` resamples of `data` into one contiguous buffer.
fn draw_resamples(data: &[f64], count: usize, rng: &mut RngState) -> Vec<f64> {
    let d = data.len();
    let mut out = Vec::with_capacity(count * d);
    for _ in 0..count * d {
        out.push(data[rng.index_below(d)]);
    }
    out
}

fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Folds the mean of every `d`-long resample in `buf` into `acc`, releasing
/// each resample's floats once its mean is taken.
fn fold_means(comm: &Comm, buf: &[f64], d: usize, acc: &mut MeanAccumulator) -> Result<()> {
    for sample in buf.chunks_exact(d) {
        acc.push(mean(sample));
        comm.free(d as u64)?;
    }
    Ok(())
}

fn report(
    kind: StrategyKind,
    config: &ExperimentConfig,
    params: &CostParams,
    estimate: VarianceEstimate,
    ledger: &FabricLedger,
) -> Result<StrategyReport> {
    Ok(StrategyReport {
        kind,
        config: *config,
        estimate,
        measured: Measured::from_ledger(ledger),
        predicted: predict(kind, config, params)?,
    })
}

pub fn run_fsd(data: &Dataset, config: &ExperimentConfig, params: &CostParams, fabric: &Fabric) -> Result<StrategyReport> {
    config.validate()?;
    data.check_matches(config)?;
    check_fabric(fabric, config)?;
    let values = data.values();
    let d = config.dataset_size;
    let n = config.num_resamples;
    let p = config.num_processes;
    let share = config.resamples_per_rank();
    let seed = config.seed;

    let (outputs, ledger) = fabric.run(|c| async move {
        if c.is_root() {
            c.alloc(d as u64)?;
            c.alloc((n * d) as u64)?;
            let mut rng = rank_substream(seed, 0);
            let samples = draw_resamples(values, n, &mut rng);
            c.add_points((n * d) as u64);
            for r in 1..p {
                c.send(r, Channel::DataOut, samples[r * share * d..(r + 1) * share * d].to_vec())?;
                c.free((share * d) as u64)?;
            }
            c.free(d as u64)?;

            let mut acc = MeanAccumulator::new();
            fold_means(&c, &samples[..share * d], d, &mut acc)?;
            c.add_points((share * d) as u64);
            drop(samples);
            for r in 1..p {
                let means = c.recv(r).await?;
                if means.len() != share {
                    return Err(Error::Protocol(format!("rank {r} returned {} means, expected {share}", means.len())));
                }
                means.iter().for_each(|&m| acc.push(m));
                c.free(share as u64)?;
            }
            Ok(Some(variance_from_stats(&acc.finish()?)))
        } else {
            let samples = c.recv(0).await?;
            let mut means = Vec::with_capacity(share);
            for sample in samples.chunks_exact(d) {
                means.push(mean(sample));
                c.free(d as u64)?;
                c.alloc(1)?;
            }
            c.add_points((share * d) as u64);
            c.send(0, Channel::ResultsBack, means)?;
            c.free(share as u64)?;
            Ok(None)
        }
    })?;
    report(StrategyKind::Fsd, config, params, root_estimate(outputs)?, &ledger)
}

pub fn run_dbsr(data: &Dataset, config: &ExperimentConfig, params: &CostParams, fabric: &Fabric) -> Result<StrategyReport> {
    config.validate()?;
    data.check_matches(config)?;
    check_fabric(fabric, config)?;
    let values = data.values();
    let d = config.dataset_size;
    let p = config.num_processes;
    let share = config.resamples_per_rank();
    let seed = config.seed;

    let (outputs, ledger) = fabric.run(|c| async move {
        let rank = c.rank();
        if c.is_root() {
            c.alloc(d as u64)?;
            for r in 1..p {
                c.send(r, Channel::DataOut, values.to_vec())?;
            }
            c.alloc((share * d) as u64)?;
            let mut rng = rank_substream(seed, 0);
            let samples = draw_resamples(values, share, &mut rng);
            c.add_points((share * d) as u64);
            c.free(d as u64)?;

            let mut acc = MeanAccumulator::new();
            fold_means(&c, &samples, d, &mut acc)?;
            drop(samples);
            for r in 1..p {
                let remote = c.recv(r).await?;
                if remote.len() != share * d {
                    return Err(Error::Protocol(format!(
                        "rank {r} returned {} floats, expected {}",
                        remote.len(),
                        share * d
                    )));
                }
                fold_means(&c, &remote, d, &mut acc)?;
            }
            Ok(Some(variance_from_stats(&acc.finish()?)))
        } else {
            let local = c.recv(0).await?;
            c.alloc((share * d) as u64)?;
            let mut rng = rank_substream(seed, rank as u64);
            let samples = draw_resamples(&local, share, &mut rng);
            c.add_points((share * d) as u64);
            c.send(0, Channel::ResultsBack, samples)?;
            c.free((share * d) as u64)?;
            c.free(d as u64)?;
            Ok(None)
        }
    })?;
    report(StrategyKind::Dbsr, config, params, root_estimate(outputs)?, &ledger)
}

pub fn run_dbsa(data: &Dataset, config: &ExperimentConfig, params: &CostParams, fabric: &Fabric) -> Result<StrategyReport> {
    config.validate()?;
    data.check_matches(config)?;
    check_fabric(fabric, config)?;
    let values = data.values();
    let d = config.dataset_size;
    let p = config.num_processes;
    let share = config.resamples_per_rank();
    let seed = config.seed;

    // Resample locally and reduce the N/P means to (m1, m2).
    let local_stats = |c: &Comm, local: &[f64]| -> Result<SummaryStats> {
        c.alloc((share * d) as u64)?;
        let mut rng = rank_substream(seed, c.rank() as u64);
        let samples = draw_resamples(local, share, &mut rng);
        c.add_points((share * d) as u64);
        c.free(d as u64)?;
        let mut acc = MeanAccumulator::new();
        fold_means(c, &samples, d, &mut acc)?;
        acc.finish()
    };

    let (outputs, ledger) = fabric.run(|c| async move {
        if c.is_root() {
            c.alloc(d as u64)?;
            for r in 1..p {
                c.send(r, Channel::DataOut, values.to_vec())?;
            }
            let mut parts = vec![local_stats(&c, values)?];
            for r in 1..p {
                let payload = c.recv(r).await?;
                let [m1, m2] = payload[..] else {
                    return Err(Error::Protocol(format!("rank {r} sent {} floats, expected 2", payload.len())));
                };
                parts.push(SummaryStats::from_parts(m1, m2, share as u64)?);
                c.free(2)?;
            }
            Ok(Some(variance_from_stats(&pool_stats(&parts)?)))
        } else {
            let local = c.recv(0).await?;
            let stats = local_stats(&c, &local)?;
            c.alloc(2)?;
            c.send(0, Channel::ResultsBack, stats.to_payload().to_vec())?;
            c.free(2)?;
            Ok(None)
        }
    })?;
    report(StrategyKind::Dbsa, config, params, root_estimate(outputs)?, &ledger)
}

pub fn run_ddrs(shards: &[Dataset], config: &ExperimentConfig, params: &CostParams, fabric: &Fabric) -> Result<StrategyReport> {
    run_ddrs_with(shards, config, params, fabric, DdrsOptions::default()).map(|run| run.report)
}

pub fn run_ddrs_with(
    shards: &[Dataset],
    config: &ExperimentConfig,
    params: &CostParams,
    fabric: &Fabric,
    options: DdrsOptions,
) -> Result<DdrsRun> {
    config.validate_sharded()?;
    check_fabric(fabric, config)?;
    let d = config.dataset_size;
    let n = config.num_resamples;
    let p = config.num_processes;
    let shard_len = config.shard_len();
    if shards.len() != p || shards.iter().any(|s| s.len() != shard_len) {
        return Err(Error::Config(format!("expected {p} shards of {shard_len} points")));
    }
    let seed = config.seed;

    let (outputs, ledger) = fabric.run(|c| async move {
        let rank = c.rank();
        let local = shards[rank].values();
        let lo = rank * shard_len;
        let hi = lo + shard_len;
        c.alloc(shard_len as u64)?;
        let mut rng = rng_new(seed);
        if options.desync_rank == Some(rank) {
            rng.next_u64();
        }

        let mut acc = MeanAccumulator::new();
        let mut counts = Vec::new();
        for sample in 0..n {
            c.alloc(DDRS_PAIR_FLOATS)?;
            let mut partial_sum = 0.0;
            let mut partial_count = 0u64;
            for _ in 0..d {
                let j = rng.index_below(d);
                if (lo..hi).contains(&j) {
                    partial_sum += local[j - lo];
                    partial_count += 1;
                }
            }
            c.add_points(d as u64);

            if c.is_root() {
                let mut global_sum = partial_sum;
                let mut global_count = partial_count;
                for r in 1..p {
                    let sum = c.recv(r).await?;
                    let count = c.recv(r).await?;
                    match (&sum[..], &count[..]) {
                        ([s], [k]) => {
                            global_sum += s;
                            global_count += *k as u64;
                        }
                        _ => return Err(Error::Protocol(format!("rank {r} sent a malformed partial"))),
                    }
                    c.free(2)?;
                }
                if global_count != d as u64 {
                    return Err(Error::SynchronizationFault { sample, count: global_count, expected: d as u64 });
                }
                acc.push(global_sum / d as f64);
                counts.push(global_count);
            } else {
                c.send(0, Channel::ResultsBack, vec![partial_sum])?;
                c.send(0, Channel::Verification, vec![partial_count as f64])?;
            }
            c.free(DDRS_PAIR_FLOATS)?;
        }
        c.free(shard_len as u64)?;

        if c.is_root() {
            Ok(Some((variance_from_stats(&acc.finish()?), counts)))
        } else {
            Ok(None)
        }
    })?;

    let (estimate, global_counts) = outputs
        .into_iter()
        .next()
        .flatten()
        .ok_or_else(|| Error::Protocol("root produced no estimate".into()))?;
    Ok(DdrsRun { report: report(StrategyKind::Ddrs, config, params, estimate, &ledger)?, global_counts })
}

/// Runs `kind` on a fresh fabric of `config.num_processes` ranks. The
/// sharded strategy receives `data` split into contiguous shards.
pub fn run_strategy(
    kind: StrategyKind,
    data: &Dataset,
    config: &ExperimentConfig,
    params: &CostParams,
    memory_cap: Option<u64>,
) -> Result<StrategyReport> {
    let fabric = Fabric::new(config.num_processes)?.with_memory_cap(memory_cap);
    match kind {
        StrategyKind::Fsd => run_fsd(data, config, params, &fabric),
        StrategyKind::Dbsr => run_dbsr(data, config, params, &fabric),
        StrategyKind::Dbsa => run_dbsa(data, config, params, &fabric),
        StrategyKind::Ddrs => {
            config.validate_sharded()?;
            data.check_matches(config)?;
            let shards = data.shards(config.num_processes)?;
            run_ddrs(&shards, config, params, &fabric)
        }
    }
}

/// Sequential estimate driven by the same streams the strategy uses:
/// rank 0's substream for FSD, per-rank substreams for DBSR/DBSA, and the
/// single global stream for DDRS.
pub fn stream_matched_oracle(kind: StrategyKind, data: &Dataset, config: &ExperimentConfig) -> Result<VarianceEstimate> {
    config.validate()?;
    data.check_matches(config)?;
    match kind {
        StrategyKind::Fsd => bootstrap_variance_from_stream(data, config.num_resamples, rank_substream(config.seed, 0)),
        StrategyKind::Dbsr | StrategyKind::Dbsa => {
            let share = config.resamples_per_rank();
            let mut means = Vec::with_capacity(config.num_resamples);
            for r in 0..config.num_processes {
                let mut rng = rank_substream(config.seed, r as u64);
                means.extend(bootstrap_means(data.values(), share, &mut rng));
            }
            VarianceEstimate::new(population_variance(&means)?)
        }
        StrategyKind::Ddrs => sequential_bootstrap_oracle(data, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::relative_error;

    fn params() -> CostParams {
        CostParams::new(1e8, 1e8).unwrap()
    }

    fn setup(d: usize, n: usize, p: usize) -> (Dataset, ExperimentConfig) {
        (Dataset::synthetic(d, 205).unwrap(), ExperimentConfig::new(d, n, p, 205).unwrap())
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("DBSA".parse::<StrategyKind>().unwrap(), StrategyKind::Dbsa);
        assert_eq!("d".parse::<StrategyKind>().unwrap(), StrategyKind::Ddrs);
        assert!("tree".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn every_strategy_matches_prediction_on_small_config() {
        let (data, cfg) = setup(100, 40, 4);
        for kind in StrategyKind::ALL {
            let r = run_strategy(kind, &data, &cfg, &params(), None).unwrap();
            let m = r.prediction_match();
            assert!(m.all(), "{kind}: {m:?}\n{:?}\n{:?}", r.measured, r.predicted);
        }
    }

    #[test]
    fn single_process_moves_no_bytes() {
        let (data, cfg) = setup(16, 4, 1);
        for kind in StrategyKind::ALL {
            let r = run_strategy(kind, &data, &cfg, &params(), None).unwrap();
            assert_eq!(r.measured_bytes(), 0, "{kind}");
            assert!(r.prediction_match().all(), "{kind}");
        }
    }

    #[test]
    fn estimates_match_stream_oracles() {
        let (data, cfg) = setup(100, 40, 4);
        for kind in StrategyKind::ALL {
            let r = run_strategy(kind, &data, &cfg, &params(), None).unwrap();
            let oracle = stream_matched_oracle(kind, &data, &cfg).unwrap();
            assert!(relative_error(r.estimate.value(), oracle.value()) <= 1e-9, "{kind}");
        }
    }

    #[test]
    fn dbsa_agrees_with_dbsr() {
        let (data, cfg) = setup(100, 100, 5);
        let a = run_strategy(StrategyKind::Dbsa, &data, &cfg, &params(), None).unwrap();
        let b = run_strategy(StrategyKind::Dbsr, &data, &cfg, &params(), None).unwrap();
        assert!(relative_error(a.estimate.value(), b.estimate.value()) <= 1e-12);
    }

    #[test]
    fn ddrs_counts_cover_every_draw() {
        let (data, cfg) = setup(100, 20, 4);
        let shards = data.shards(4).unwrap();
        let fabric = Fabric::new(4).unwrap();
        let run = run_ddrs_with(&shards, &cfg, &params(), &fabric, DdrsOptions::default()).unwrap();
        assert_eq!(run.global_counts, vec![100; 20]);
    }

    #[test]
    fn ddrs_desync_is_a_synchronization_fault() {
        let (data, cfg) = setup(100, 20, 4);
        let shards = data.shards(4).unwrap();
        let fabric = Fabric::new(4).unwrap();
        let err = run_ddrs_with(&shards, &cfg, &params(), &fabric, DdrsOptions { desync_rank: Some(2) }).unwrap_err();
        assert!(matches!(err, Error::SynchronizationFault { expected: 100, .. }), "{err}");
    }

    #[test]
    fn ddrs_rejects_uneven_shards() {
        let (data, cfg) = setup(10, 4, 4);
        let err = run_strategy(StrategyKind::Ddrs, &data, &cfg, &params(), None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn memory_cap_makes_fsd_infeasible() {
        let (data, cfg) = setup(100, 40, 4);
        let err = run_strategy(StrategyKind::Fsd, &data, &cfg, &params(), Some(1000)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { rank: 0, .. }));
        // The sharded strategy fits in D/P + 4.
        assert!(run_strategy(StrategyKind::Ddrs, &data, &cfg, &params(), Some(29)).is_ok());
    }

    #[test]
    fn fabric_size_must_match_config() {
        let (data, cfg) = setup(16, 4, 2);
        let fabric = Fabric::new(4).unwrap();
        assert!(run_dbsa(&data, &cfg, &params(), &fabric).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let (data, cfg) = setup(64, 16, 4);
        for kind in StrategyKind::ALL {
            let a = run_strategy(kind, &data, &cfg, &params(), None).unwrap();
            let b = run_strategy(kind, &data, &cfg, &params(), None).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.estimate.value().to_bits(), b.estimate.value().to_bits());
        }
    }
}
