//! Closed-form communication, computation and memory costs for the four
//! strategies, and a memory-aware planner on top of them.
//!
//! Communication time is total wire volume over bandwidth, latency ignored.
//! Byte counts are exact integers and match what the simulator measures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::{CostParams, ExperimentConfig, FLOAT_BYTES};
use crate::error::{Error, Result};
use crate::strategies::StrategyKind;

/// Per-sample scratch of the sharded strategy: the `(sum, count)` pair.
pub const DDRS_PAIR_FLOATS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub kind: StrategyKind,
    pub bytes_data_out: u64,
    pub bytes_results_back: u64,
    /// Count side channel of the sharded strategy; not part of `t_comm`.
    pub bytes_verification: u64,
    pub t_comm: f64,
    /// Computation time as the closed form states it.
    pub t_comp: f64,
    /// Alternative reading with the sharded strategy's scan divided over P.
    pub t_comp_parallel: f64,
    pub peak_floats_root: u64,
    /// `None` when there are no worker ranks (P = 1).
    pub peak_floats_worker: Option<u64>,
    pub points_root: u64,
    pub points_worker: Option<u64>,
}

impl CostBreakdown {
    /// Bytes priced by `t_comm`.
    pub fn model_bytes(&self) -> u64 {
        self.bytes_data_out + self.bytes_results_back
    }

    /// Every byte that crosses the fabric, side channels included.
    pub fn wire_bytes(&self) -> u64 {
        self.model_bytes() + self.bytes_verification
    }

    pub fn peak_floats_max(&self) -> u64 {
        self.peak_floats_root.max(self.peak_floats_worker.unwrap_or(0))
    }

    pub fn total_time(&self) -> f64 {
        self.t_comm + self.t_comp
    }

    pub fn peak_floats_for_rank(&self, rank: usize) -> u64 {
        if rank == 0 {
            self.peak_floats_root
        } else {
            self.peak_floats_worker.unwrap_or(0)
        }
    }

    pub fn points_for_rank(&self, rank: usize) -> u64 {
        if rank == 0 {
            self.points_root
        } else {
            self.points_worker.unwrap_or(0)
        }
    }
}

pub fn predict(kind: StrategyKind, config: &ExperimentConfig, params: &CostParams) -> Result<CostBreakdown> {
    match kind {
        StrategyKind::Ddrs => config.validate_sharded()?,
        _ => config.validate()?,
    }
    let d = config.dataset_size as u64;
    let n = config.num_resamples as u64;
    let p = config.num_processes as u64;
    let share = n / p;
    let others = p - 1;
    let has_workers = p > 1;
    let worker = |v: u64| has_workers.then_some(v);

    let (data_out, results, verification, peak_root, peak_worker, points_root, points_worker) = match kind {
        StrategyKind::Fsd => (
            FLOAT_BYTES * d * share * others,
            FLOAT_BYTES * share * others,
            0,
            d + n * d,
            worker(share * d),
            n * d + share * d,
            worker(share * d),
        ),
        StrategyKind::Dbsr => (
            FLOAT_BYTES * d * others,
            FLOAT_BYTES * d * share * others,
            0,
            d + share * d,
            worker(d + share * d),
            share * d,
            worker(share * d),
        ),
        StrategyKind::Dbsa => (
            FLOAT_BYTES * d * others,
            FLOAT_BYTES * 2 * others,
            0,
            d + share * d,
            worker(d + share * d),
            share * d,
            worker(share * d),
        ),
        StrategyKind::Ddrs => {
            let shard = d / p;
            // The root holds its own pair plus one received value at a time.
            let root_scratch = if has_workers { 2 * DDRS_PAIR_FLOATS } else { DDRS_PAIR_FLOATS };
            (
                0,
                FLOAT_BYTES * n * others,
                FLOAT_BYTES * n * others,
                shard + root_scratch,
                worker(shard + DDRS_PAIR_FLOATS),
                n * d,
                worker(n * d),
            )
        }
    };

    let t_comm = (data_out + results) as f64 / params.bandwidth;
    let t_comp = points_root as f64 / params.compute_speed;
    let t_comp_parallel = match kind {
        StrategyKind::Ddrs => (n * d) as f64 / (p as f64 * params.compute_speed),
        _ => t_comp,
    };

    Ok(CostBreakdown {
        kind,
        bytes_data_out: data_out,
        bytes_results_back: results,
        bytes_verification: verification,
        t_comm,
        t_comp,
        t_comp_parallel,
        peak_floats_root: peak_root,
        peak_floats_worker: peak_worker,
        points_root,
        points_worker,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanQuery {
    pub config: ExperimentConfig,
    pub params: CostParams,
    pub memory_cap_floats: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub kind: StrategyKind,
    /// `None` when the strategy cannot run this configuration at all
    /// (e.g. P does not divide D for sharded data).
    pub breakdown: Option<CostBreakdown>,
    pub required_floats: Option<u64>,
    pub feasible: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub choice: Option<StrategyKind>,
    pub memory_cap_floats: u64,
    pub candidates: Vec<PlanCandidate>,
    pub rationale: String,
}

impl Plan {
    pub fn chosen(&self) -> Option<&PlanCandidate> {
        let kind = self.choice?;
        self.candidates.iter().find(|c| c.kind == kind)
    }
}

/// Picks the feasible strategy with the smallest `t_comm + t_comp`.
/// Equal totals fall back to the order DBSA, DDRS, DBSR, FSD. When nothing
/// fits, `choice` is `None` and the rationale lists every requirement.
pub fn plan(query: &PlanQuery) -> Result<Plan> {
    query.config.validate()?;
    if query.memory_cap_floats == 0 {
        return Err(Error::Config("memory cap must be at least 1 float".into()));
    }
    let cap = query.memory_cap_floats;

    let candidates: Vec<PlanCandidate> = StrategyKind::ALL
        .iter()
        .map(|&kind| match predict(kind, &query.config, &query.params) {
            Ok(b) => {
                let required = b.peak_floats_max();
                let feasible = required <= cap;
                PlanCandidate {
                    kind,
                    note: format!(
                        "needs {required} floats per process (cap {cap}); t_comm={:.6e}s t_comp={:.6e}s",
                        b.t_comm, b.t_comp
                    ),
                    breakdown: Some(b),
                    required_floats: Some(required),
                    feasible,
                }
            }
            Err(e) => PlanCandidate {
                kind,
                breakdown: None,
                required_floats: None,
                feasible: false,
                note: e.to_string(),
            },
        })
        .collect();

    let mut best: Option<&PlanCandidate> = None;
    for &kind in &StrategyKind::PREFERENCE {
        let cand = candidates.iter().find(|c| c.kind == kind).expect("all kinds evaluated");
        if !cand.feasible {
            continue;
        }
        let total = cand.breakdown.as_ref().map(CostBreakdown::total_time).unwrap_or(f64::INFINITY);
        let better = match best {
            None => true,
            Some(b) => total < b.breakdown.as_ref().map(CostBreakdown::total_time).unwrap_or(f64::INFINITY),
        };
        if better {
            best = Some(cand);
        }
    }

    let mut rationale = String::new();
    match best {
        Some(c) => {
            let b = c.breakdown.as_ref().expect("feasible candidate has a breakdown");
            let _ = write!(
                rationale,
                "{} minimizes t_comm + t_comp = {:.6e}s among strategies fitting {} floats per process",
                c.kind.label(),
                b.total_time(),
                cap
            );
        }
        None => {
            let _ = write!(rationale, "no strategy fits {cap} floats per process:");
            for c in &candidates {
                let _ = write!(rationale, " {}: {};", c.kind.label(), c.note);
            }
        }
    }

    Ok(Plan { choice: best.map(|c| c.kind), memory_cap_floats: cap, candidates, rationale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk() -> (ExperimentConfig, CostParams) {
        (
            ExperimentConfig::new(10_000, 1_000, 4, 205).unwrap(),
            CostParams::new(1e8, 1e8).unwrap(),
        )
    }

    #[test]
    fn closed_forms_at_listing_constants() {
        let (cfg, params) = desk();
        let dbsr = predict(StrategyKind::Dbsr, &cfg, &params).unwrap();
        assert_eq!(dbsr.model_bytes(), 30_120_000);
        let dbsa = predict(StrategyKind::Dbsa, &cfg, &params).unwrap();
        assert_eq!(dbsa.model_bytes(), 120_024);
        let ddrs = predict(StrategyKind::Ddrs, &cfg, &params).unwrap();
        assert_eq!(ddrs.bytes_results_back, 12_000);
        assert_eq!(ddrs.bytes_verification, 12_000);
        let fsd = predict(StrategyKind::Fsd, &cfg, &params).unwrap();
        assert_eq!(fsd.bytes_data_out, 30_000_000);
        assert_eq!(fsd.bytes_results_back, 3_000);
        assert_eq!(dbsa.peak_floats_worker, Some(2_510_000));
        assert_eq!(fsd.peak_floats_root, 10_010_000);
        assert_eq!(ddrs.peak_floats_root, 2_504);
        assert_eq!(ddrs.peak_floats_worker, Some(2_502));
    }

    #[test]
    fn t_comm_is_volume_over_bandwidth() {
        let (cfg, params) = desk();
        for kind in StrategyKind::ALL {
            let b = predict(kind, &cfg, &params).unwrap();
            assert_eq!(b.t_comm, b.model_bytes() as f64 / params.bandwidth);
        }
        let ddrs = predict(StrategyKind::Ddrs, &cfg, &params).unwrap();
        assert_eq!(ddrs.t_comp, 0.1);
        assert_eq!(ddrs.t_comp_parallel, 0.025);
    }

    #[test]
    fn single_process_moves_nothing() {
        let cfg = ExperimentConfig::new(100, 40, 1, 0).unwrap();
        let params = CostParams::new(1.0, 1.0).unwrap();
        for kind in StrategyKind::ALL {
            let b = predict(kind, &cfg, &params).unwrap();
            assert_eq!(b.wire_bytes(), 0, "{kind:?}");
            assert_eq!(b.peak_floats_worker, None);
        }
    }

    #[test]
    fn sharded_prediction_requires_divisibility() {
        let cfg = ExperimentConfig::new(10, 4, 4, 0).unwrap();
        let params = CostParams::new(1.0, 1.0).unwrap();
        assert!(matches!(predict(StrategyKind::Ddrs, &cfg, &params), Err(Error::Config(_))));
        assert!(predict(StrategyKind::Dbsa, &cfg, &params).is_ok());
    }

    #[test]
    fn planner_examples() {
        let (config, params) = desk();
        let q = |cap| PlanQuery { config, params, memory_cap_floats: cap };

        let p = plan(&q(10_000_000)).unwrap();
        assert_eq!(p.choice, Some(StrategyKind::Dbsa));
        assert!(!p.candidates.iter().find(|c| c.kind == StrategyKind::Fsd).unwrap().feasible);

        let p = plan(&q(3_000)).unwrap();
        assert_eq!(p.choice, Some(StrategyKind::Ddrs));

        let p = plan(&q(100)).unwrap();
        assert_eq!(p.choice, None);
        for kind in StrategyKind::ALL {
            assert!(p.rationale.contains(kind.label()), "{}", p.rationale);
        }
    }

    #[test]
    fn planner_tie_break_single_process() {
        let config = ExperimentConfig::new(10_000, 1_000, 1, 205).unwrap();
        let params = CostParams::new(1e8, 1e8).unwrap();
        let p = plan(&PlanQuery { config, params, memory_cap_floats: u64::MAX }).unwrap();
        assert_eq!(p.choice, Some(StrategyKind::Dbsa));
    }

    #[test]
    fn crossover_and_d_independence() {
        let params = CostParams::new(1e8, 1e8).unwrap();
        for n in [4usize, 8, 100, 1000] {
            let cfg = ExperimentConfig::new(16, n, 4, 0).unwrap();
            let dbsa = predict(StrategyKind::Dbsa, &cfg, &params).unwrap();
            let dbsr = predict(StrategyKind::Dbsr, &cfg, &params).unwrap();
            assert!(dbsa.t_comm < dbsr.t_comm);
        }
        let small = ExperimentConfig::new(100, 40, 4, 0).unwrap();
        let large = ExperimentConfig::new(10_000, 40, 4, 0).unwrap();
        let ddrs = |c: &ExperimentConfig| predict(StrategyKind::Ddrs, c, &params).unwrap().model_bytes();
        let dbsa = |c: &ExperimentConfig| predict(StrategyKind::Dbsa, c, &params).unwrap().model_bytes();
        assert_eq!(ddrs(&small), ddrs(&large));
        assert_eq!(dbsa(&large) - 8 * 3, 100 * (dbsa(&small) - 8 * 3));
    }

    proptest! {
        #[test]
        fn planner_is_sound(
            d_per in 1usize..200,
            share in 1usize..50,
            p in 1usize..6,
            cap in 1u64..200_000,
            bw in 1e3f64..1e9,
            speed in 1e3f64..1e9,
        ) {
            let config = ExperimentConfig::new(d_per * p, share * p, p, 0).unwrap();
            let params = CostParams::new(bw, speed).unwrap();
            let result = plan(&PlanQuery { config, params, memory_cap_floats: cap }).unwrap();
            let feasible: Vec<&PlanCandidate> = result.candidates.iter().filter(|c| c.feasible).collect();
            match result.chosen() {
                None => prop_assert!(feasible.is_empty()),
                Some(chosen) => {
                    let b = chosen.breakdown.as_ref().unwrap();
                    prop_assert!(b.peak_floats_max() <= cap);
                    for c in feasible {
                        prop_assert!(c.breakdown.as_ref().unwrap().total_time() >= b.total_time());
                    }
                }
            }
        }
    }
}
