use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, RngCore, SeedableRng};

use super::checks::{
    check_gcsl_lower_bound, check_performance_bound, BoundReport, PerformanceReport,
};
use super::TabularDistributionPolicy;
use crate::env::FiniteMdp;
use crate::rng::{RngStreams, StreamRng};
use crate::Result;

pub const DEFAULT_INSTANCES: usize = 100;
pub const PERFORMANCE_EPSILONS: [f64; 4] = [0.0, 0.05, 0.1, 0.25];

/// A random `(pi, pi_old)` pair on the 4-state chain with `T = 3`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub mdp: FiniteMdp,
    pub pi: TabularDistributionPolicy,
    pub pi_old: TabularDistributionPolicy,
}

pub fn instance_seed(root: u64, index: usize) -> u64 {
    RngStreams::new(root)
        .indexed("instance", index as u64)
        .next_u64()
}

/// `pi_old` is a random full-support table; `pi` mixes it with another one
/// at a random weight so the instances cover small and large `alpha`.
pub fn random_instance(seed: u64) -> Result<Instance> {
    let mdp = FiniteMdp::chain(4, 3)?;
    let mut rng = StreamRng::seed_from_u64(seed);
    let (n, a, t) = (mdp.state_count(), mdp.action_count(), mdp.horizon());
    let pi_old = TabularDistributionPolicy::random_full_support(n, a, t, &mut rng);
    let other = TabularDistributionPolicy::random_full_support(n, a, t, &mut rng);
    let lambda: f64 = rng.random();
    let mut pi = other.clone();
    for (x, (o, p)) in pi
        .table
        .iter_mut()
        .zip(other.table.iter().zip(&pi_old.table))
    {
        *x = lambda * p + (1.0 - lambda) * o;
    }
    Ok(Instance {
        seed,
        mdp,
        pi,
        pi_old,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteOptions {
    pub instances: usize,
    pub seed: u64,
    /// Test hook: break normalization of `pi` in this instance.
    pub corrupt: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: DEFAULT_INSTANCES,
            seed: 0,
            corrupt: None,
        }
    }
}

/// One bound report per random instance, keyed by instance seed.
pub fn run_bound_suite(options: &SuiteOptions) -> Result<Vec<(u64, BoundReport)>> {
    (0..options.instances)
        .map(|i| {
            let mut inst = random_instance(instance_seed(options.seed, i))?;
            if options.corrupt == Some(i) {
                let row: Vec<f64> = inst
                    .pi
                    .row(0, 0, inst.mdp.horizon())
                    .iter()
                    .map(|p| p * 1.5)
                    .collect();
                inst.pi.set_row(0, 0, inst.mdp.horizon(), &row)?;
            }
            Ok((
                inst.seed,
                check_gcsl_lower_bound(&inst.pi, &inst.pi_old, &inst.mdp)?,
            ))
        })
        .collect()
}

/// The performance-bound check on the chain and a 3x3 open grid with a
/// uniform data-collection policy.
pub fn run_performance_suite() -> Result<Vec<(String, PerformanceReport)>> {
    let envs = [FiniteMdp::chain(4, 3)?, FiniteMdp::open_grid(3, 3, 4)?];
    envs.iter()
        .map(|mdp| {
            let old = TabularDistributionPolicy::for_mdp(mdp);
            let name = String::from(crate::env::GoalEnv::name(mdp));
            Ok((
                name,
                check_performance_bound(mdp, &old, &PERFORMANCE_EPSILONS)?,
            ))
        })
        .collect()
}
