//! Nonparametric cluster bootstrap with percentile intervals.
//!
//! Replicate b resamples clusters with a seed derived from (master seed, b)
//! and hands the estimator a seed derived the same way, so the replicate
//! vector does not depend on how a [`ReplicateRunner`] schedules the work.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::data_model::ObservationTable;
use crate::numerics::quantile_sorted;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ResampleMode {
    #[default]
    WithReplacement,
    /// m-out-of-n cluster subsampling. Experimental.
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default))]
pub struct InferenceConfig {
    pub replicates: usize,
    pub mode: ResampleMode,
    pub level: f64,
    pub seed: u64,
    /// Clusters per subsample without replacement; defaults to half.
    pub subsample: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { replicates: 1000, mode: ResampleMode::WithReplacement, level: 0.95, seed: 0, subsample: None }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInference("replicates must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInference("level must lie in (0, 1)".into()));
        }
        if self.subsample == Some(0) {
            return Err(Error::InvalidInference("subsample must be positive".into()));
        }
        Ok(())
    }
}

/// Seed handed to the estimator in replicate `b`.
pub fn replicate_seed(master: u64, b: usize) -> u64 {
    rng::derive_seed(master, b as u64)
}

fn clusters_of(table: &ObservationTable) -> BTreeMap<&str, Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.records.iter().enumerate() {
        m.entry(r.cluster_id.as_str()).or_default().push(i);
    }
    m
}

/// One resample of whole clusters. With replacement, K clusters are drawn
/// from the K available and the k-th draw gets `#k` appended to its
/// cluster and person ids so repeated clusters stay distinct. Without
/// replacement, `subsample` (default ⌊K/2⌋) distinct clusters are kept.
pub fn resample_clusters(table: &ObservationTable, config: &InferenceConfig, seed: u64) -> Result<ObservationTable> {
    let clusters = clusters_of(table);
    let k = clusters.len();
    if k < 2 {
        return Err(Error::TooFewClusters(k));
    }
    let ids: Vec<&str> = clusters.keys().copied().collect();
    let mut g = rng::stream(seed, 0);
    let mut out =
        ObservationTable { columns: table.columns.clone(), outcome_kind: table.outcome_kind, records: Vec::new() };
    match config.mode {
        ResampleMode::WithReplacement => {
            for draw in 0..k {
                let c = ids[g.gen_range(0..k)];
                for &i in &clusters[c] {
                    let mut rec = table.records[i].clone();
                    rec.person_id = format!("{}#{draw}", rec.person_id);
                    rec.cluster_id = format!("{}#{draw}", rec.cluster_id);
                    out.records.push(rec);
                }
            }
        }
        ResampleMode::WithoutReplacement => {
            let m = config.subsample.unwrap_or(k / 2).min(k);
            let mut order = ids;
            order.partial_shuffle(&mut g, m);
            let mut keep: Vec<&str> = order[..m].to_vec();
            keep.sort_unstable();
            for c in keep {
                out.records.extend(clusters[c].iter().map(|&i| table.records[i].clone()));
            }
        }
    }
    Ok(out)
}

/// Executes independent replicate tasks. Implementations may run them in any
/// order or in parallel but must return results in index order.
pub trait ReplicateRunner {
    fn map<R, F>(&self, count: usize, task: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

/// Runs replicates one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ReplicateRunner for Sequential {
    fn map<R, F>(&self, count: usize, task: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..count).map(task).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BootstrapResult {
    /// Per replicate, one value per estimator; `None` marks a failure.
    pub replicates: Vec<Option<Vec<f64>>>,
    /// Percentile interval per estimator.
    pub intervals: Vec<(f64, f64)>,
    pub failed: usize,
    pub warnings: Vec<String>,
}

impl BootstrapResult {
    /// The replicate values of estimator `k`, failures as `None`.
    pub fn column(&self, k: usize) -> Vec<Option<f64>> {
        self.replicates.iter().map(|r| r.as_ref().map(|v| v[k])).collect()
    }
}

/// Cluster bootstrap of an estimator returning one value per estimator kind.
/// `estimate(table, seed)` must be pure given its arguments.
pub fn cluster_bootstrap<R, F>(
    table: &ObservationTable,
    config: &InferenceConfig,
    runner: &R,
    estimate: F,
) -> Result<BootstrapResult>
where
    R: ReplicateRunner,
    F: Fn(&ObservationTable, u64) -> Result<Vec<f64>> + Sync + Send,
{
    config.validate()?;
    let k = clusters_of(table).len();
    if k < 2 {
        return Err(Error::TooFewClusters(k));
    }
    let replicates: Vec<Option<Vec<f64>>> = runner.map(config.replicates, |b| {
        let seed = replicate_seed(config.seed, b);
        let sample = resample_clusters(table, config, rng::derive_seed(seed, 0)).ok()?;
        estimate(&sample, seed).ok().filter(|v| v.iter().all(|x| x.is_finite()))
    });
    let total = replicates.len();
    let failed = replicates.iter().filter(|r| r.is_none()).count();
    if failed * 10 > total || failed == total {
        return Err(Error::ReplicateFailure { failed, total });
    }
    let width = replicates.iter().flatten().map(Vec::len).next().unwrap_or(0);
    let tail = (1.0 - config.level) / 2.0;
    let intervals = (0..width)
        .map(|j| {
            let mut v: Vec<f64> = replicates.iter().flatten().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
        })
        .collect();
    let mut warnings = Vec::new();
    if total - failed == 1 {
        warnings.push("a single bootstrap replicate gives a degenerate interval".into());
    }
    if failed > 0 {
        warnings.push(format!("{failed} of {total} bootstrap replicates failed and were excluded"));
    }
    if config.mode == ResampleMode::WithoutReplacement {
        warnings.push("without-replacement cluster subsampling is experimental; intervals are not rescaled".into());
    }
    Ok(BootstrapResult { replicates, intervals, failed, warnings })
}
