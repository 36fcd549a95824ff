//! Experiment parameters and the dataset container.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng;

/// Bytes per accounted sample point; every wire and memory figure uses it.
pub const FLOAT_BYTES: u64 = 4;

/// Seed fixed by the reference listings.
pub const DEFAULT_SEED: u64 = 205;

/// One bootstrap experiment: dataset size, resample count, process count
/// and the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_size: usize,
    pub num_resamples: usize,
    pub num_processes: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(dataset_size: usize, num_resamples: usize, num_processes: usize, seed: u64) -> Result<Self> {
        let cfg = ExperimentConfig { dataset_size, num_resamples, num_processes, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_size == 0 {
            return Err(Error::Config("dataset size D must be at least 1".into()));
        }
        if self.num_resamples == 0 {
            return Err(Error::Config("resample count N must be at least 1".into()));
        }
        if self.num_processes == 0 {
            return Err(Error::Config("process count P must be at least 1".into()));
        }
        if !self.num_resamples.is_multiple_of(self.num_processes) {
            return Err(Error::Config(format!(
                "P={} must divide N={}",
                self.num_processes, self.num_resamples
            )));
        }
        Ok(())
    }

    /// Extra requirement of the sharded strategy: every rank owns D/P points.
    pub fn validate_sharded(&self) -> Result<()> {
        self.validate()?;
        if !self.dataset_size.is_multiple_of(self.num_processes) {
            return Err(Error::Config(format!(
                "P={} must divide D={} for sharded data",
                self.num_processes, self.dataset_size
            )));
        }
        Ok(())
    }

    /// Resamples handled by each rank (N/P).
    pub fn resamples_per_rank(&self) -> usize {
        self.num_resamples / self.num_processes
    }

    /// Points per shard (D/P); only meaningful when P divides D.
    pub fn shard_len(&self) -> usize {
        self.dataset_size / self.num_processes
    }
}

/// Bandwidth in bytes/s and compute speed in sample points/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub bandwidth: f64,
    pub compute_speed: f64,
}

impl CostParams {
    pub fn new(bandwidth: f64, compute_speed: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(compute_speed.is_finite() && compute_speed > 0.0) {
            return Err(Error::Config(format!("compute speed must be positive, got {compute_speed}")));
        }
        Ok(CostParams { bandwidth, compute_speed })
    }
}

/// The original sample. Values are held as doubles; accounting treats
/// each as a 4-byte float.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("dataset must contain at least one point".into()));
        }
        Ok(Dataset { values })
    }

    /// Deterministic standard-normal data of length `len` for `seed`.
    pub fn synthetic(len: usize, seed: u64) -> Result<Self> {
        let mut rng = prng::data_stream(seed);
        Dataset::new(prng::standard_normal(&mut rng, len))
    }

    /// Raw little-endian f32 values, no header.
    pub fn from_f32_le_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(4) {
            return Err(Error::Io(format!(
                "input length {} is not a multiple of 4 bytes",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Dataset::new(values)
    }

    pub fn load_f32_le(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Dataset::from_f32_le_bytes(&bytes)
    }

    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn byte_size(&self) -> u64 {
        FLOAT_BYTES * self.values.len() as u64
    }

    pub fn check_matches(&self, config: &ExperimentConfig) -> Result<()> {
        if self.len() != config.dataset_size {
            return Err(Error::Config(format!(
                "dataset has {} points but D={}",
                self.len(),
                config.dataset_size
            )));
        }
        Ok(())
    }

    /// Contiguous equal shards, rank `i` owning `[i*D/P, (i+1)*D/P)`.
    pub fn shards(&self, parts: usize) -> Result<Vec<Dataset>> {
        if parts == 0 || !self.len().is_multiple_of(parts) {
            return Err(Error::Config(format!(
                "cannot split {} points into {parts} equal shards",
                self.len()
            )));
        }
        self.values
            .chunks(self.len() / parts)
            .map(|c| Dataset::new(c.to_vec()))
            .collect()
    }
}
