//! Many independent random executions, checked in parallel.

use rayon::prelude::*;
use thiserror::Error;

use super::check::{check_invariants, Invariant, InvariantReport};
use super::config::{Config, ConfigInvalid};
use super::random::random_execution;
use super::replay::ReplayMismatch;
use super::shrink::shrink;
use super::trace::Trace;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error("execution {index} (seed {seed}) does not replay")]
    Replay {
        index: usize,
        seed: u64,
        #[source]
        source: ReplayMismatch,
    },
}

/// Seed of execution `index` of a campaign: SplitMix64 over the campaign
/// seed and the index, so neighbouring campaigns do not share executions.
pub fn execution_seed(campaign_seed: u64, index: usize) -> u64 {
    let mut z = campaign_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub index: usize,
    pub seed: u64,
    pub invariants: Vec<Invariant>,
    pub trace: Trace,
    pub shrunk: Option<Trace>,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignResult {
    pub executions: usize,
    pub report: InvariantReport,
    /// Failing executions in index order.
    pub failures: Vec<Failure>,
}

/// Runs `executions` random executions of `config` and merges their
/// reports in index order, so the result does not depend on scheduling.
/// Failing traces are shrunk when `shrink_failures` is set.
pub fn run_campaign(
    campaign_seed: u64,
    executions: usize,
    config: &Config,
    shrink_failures: bool,
) -> Result<CampaignResult, CampaignError> {
    config.validate()?;
    let results: Vec<Result<(InvariantReport, Option<Failure>), CampaignError>> = (0..executions)
        .into_par_iter()
        .map(|index| {
            let seed = execution_seed(campaign_seed, index);
            let trace = random_execution(seed, config)?;
            let mut report =
                check_invariants(&trace).map_err(|source| CampaignError::Replay { index, seed, source })?;
            let failure = (!report.is_clean()).then(|| {
                let shrunk = if shrink_failures { shrink(&trace).ok() } else { None };
                report.shrunk = shrunk.clone();
                Failure {
                    index,
                    seed,
                    invariants: report.failed_invariants(),
                    trace,
                    shrunk,
                }
            });
            Ok((report, failure))
        })
        .collect();
    let mut out = CampaignResult {
        executions,
        ..Default::default()
    };
    for r in results {
        let (report, failure) = r?;
        out.report.merge(report);
        out.failures.extend(failure);
    }
    Ok(out)
}
