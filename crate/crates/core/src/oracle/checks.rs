use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::optimal::{optimal_reach_policy, relabel_optimal_policy};
use super::{exact_j, tv_alpha, DataDistribution, TabularDistributionPolicy};
use crate::env::FiniteMdp;
use crate::policy::argmax;
use crate::{Error, Result};

/// Slack allowed on every inequality and equality check.
pub const TOLERANCE: f64 = 1e-9;

/// How much relabeling failed trajectories can move the objective.
///
/// With `L(tau) = log pi(tau | s_T)`, `P = P(s_T != g)` under `pi_old` and
/// `p_right` / `p_wrong` the trajectory distributions conditioned on success
/// and failure, the gap is `P * E_old[(1 - D) L]` where `D = p_wrong / p_old`.
/// That equals `P (1 - P) (E_right[L] - E_wrong[L])`. The bound is
/// `2 P (1 - P) TV(p_right, p_wrong) E_old[L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTerms {
    pub p_wrong: f64,
    pub tv_right_wrong: f64,
    /// `P * E_wrong[L]`: the part of the relabeled likelihood coming from
    /// failed trajectories.
    pub wrong_term: f64,
    pub gap: f64,
    pub gap_bound: f64,
    /// `P` is 0 or 1 so one conditional does not exist; the check is vacuous.
    pub degenerate: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub j: f64,
    pub j_surr: f64,
    pub j_gcsl: f64,
    /// `E_old[log pi(tau | s_T)]`, computed from full trajectory likelihoods.
    pub relabeled_log_likelihood: f64,
    pub alpha: f64,
    /// Start-state and transition log term: `E_old[log p(s_0) + sum log P]`.
    pub c2: f64,
    /// `4 T (T - 1) alpha^2`.
    pub penalty: f64,
    /// `J >= J_surr - penalty`.
    pub lower_bound_holds: bool,
    /// `J_surr >= E_old[log pi(tau | s_T)]`.
    pub relabel_holds: bool,
    /// `E_old[log pi(tau | s_T)] == J_gcsl + c2`.
    pub decomposition_holds: bool,
    pub gap: GapTerms,
    /// Both policy tables are valid distributions.
    pub normalized: bool,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.normalized
            && self.lower_bound_holds
            && self.relabel_holds
            && self.decomposition_holds
            && self.gap.holds
    }
}

pub fn check_gcsl_lower_bound(
    pi: &TabularDistributionPolicy,
    pi_old: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
) -> Result<BoundReport> {
    pi.check_mdp(mdp)?;
    let normalized = pi.validate().is_ok() && pi_old.validate().is_ok();
    let data = DataDistribution::enumerate(pi_old, mdp)?;
    let t = mdp.horizon() as f64;
    let j = exact_j(pi, mdp)?;
    let j_surr = data.j_surr(pi);
    let j_gcsl = data.j_gcsl(pi);
    let relabeled = data.relabeled_log_likelihood(pi);
    let c2 = data.dynamics_log_term();
    let alpha = tv_alpha(pi, pi_old)?;
    let penalty = 4.0 * t * (t - 1.0) * alpha * alpha;
    Ok(BoundReport {
        j,
        j_surr,
        j_gcsl,
        relabeled_log_likelihood: relabeled,
        alpha,
        c2,
        penalty,
        lower_bound_holds: j - (j_surr - penalty) >= -TOLERANCE,
        relabel_holds: j_surr - relabeled >= -TOLERANCE,
        decomposition_holds: (relabeled - (j_gcsl + c2)).abs() <= TOLERANCE,
        gap: gap_from(&data, pi),
        normalized,
    })
}

pub fn gap_terms(
    pi: &TabularDistributionPolicy,
    pi_old: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
) -> Result<GapTerms> {
    pi.check_mdp(mdp)?;
    Ok(gap_from(&DataDistribution::enumerate(pi_old, mdp)?, pi))
}

/// Per trajectory: mass on success, mass on failure, relabeled log-likelihood.
type TrajectoryMass = BTreeMap<(Vec<usize>, Vec<usize>), (f64, f64, f64)>;

fn gap_from(data: &DataDistribution, pi: &TabularDistributionPolicy) -> GapTerms {
    // Trajectories are merged across commanded goals: p_right and p_wrong
    // are distributions over tau alone.
    let mut by_tau = TrajectoryMass::new();
    for (g, w, tr) in data.weighted() {
        let entry = by_tau
            .entry((tr.states.clone(), tr.actions.clone()))
            .or_insert((0.0, 0.0, tr.log_likelihood(pi, tr.final_state())));
        if tr.final_state() == g {
            entry.0 += w;
        } else {
            entry.1 += w;
        }
    }
    let p_wrong: f64 = by_tau.values().map(|e| e.1).sum();
    let p_right: f64 = by_tau.values().map(|e| e.0).sum();
    let e_old: f64 = by_tau.values().map(|e| (e.0 + e.1) * e.2).sum();
    if p_wrong <= 0.0 || p_right <= 0.0 {
        let wrong_term = by_tau.values().map(|e| e.1 * e.2).sum();
        return GapTerms {
            p_wrong,
            tv_right_wrong: 0.0,
            wrong_term,
            gap: 0.0,
            gap_bound: 0.0,
            degenerate: true,
            holds: true,
        };
    }
    let e_right = by_tau.values().map(|e| e.0 * e.2).sum::<f64>() / p_right;
    let e_wrong = by_tau.values().map(|e| e.1 * e.2).sum::<f64>() / p_wrong;
    let tv = 0.5
        * by_tau
            .values()
            .map(|e| (e.0 / p_right - e.1 / p_wrong).abs())
            .sum::<f64>();
    let gap = p_wrong * p_right * (e_right - e_wrong);
    let gap_bound = 2.0 * p_wrong * p_right * tv * e_old;
    GapTerms {
        p_wrong,
        tv_right_wrong: tv,
        wrong_term: p_wrong * e_wrong,
        gap,
        gap_bound,
        degenerate: false,
        holds: gap.abs() <= gap_bound.abs() + TOLERANCE,
    }
}

/// Moves `min(epsilon, p_max)` of probability from each row's most likely
/// action to its least likely other action (lowest index on ties).
pub fn perturb_policy(pi: &TabularDistributionPolicy, epsilon: f64) -> TabularDistributionPolicy {
    let mut out = pi.clone();
    let a_count = pi.action_count;
    for row in out.table.chunks_mut(a_count) {
        let best = argmax(row);
        let mut worst = if best == 0 { 1 } else { 0 };
        for a in 0..a_count {
            if a != best && row[a] < row[worst] {
                worst = a;
            }
        }
        let moved = epsilon.min(row[best]);
        row[best] -= moved;
        row[worst] += moved;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceRow {
    pub epsilon: f64,
    /// Largest per-cell TV between the perturbed and relabel-optimal policy.
    pub alpha: f64,
    pub j_perturbed: f64,
    /// `J(pi*) - J(perturbed)`.
    pub shortfall: f64,
    /// `epsilon * T`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub j_star: f64,
    pub j_relabel_optimal: f64,
    /// `J(pi*) == J(relabel-optimal)` within tolerance.
    pub optimal_matches: bool,
    pub rows: Vec<PerformanceRow>,
}

impl PerformanceReport {
    pub fn passed(&self) -> bool {
        self.optimal_matches && self.rows.iter().all(|r| r.holds)
    }
}

/// Compares the DP-optimal policy with the relabel-optimal policy of
/// `pi_old` and with perturbations of it at each `epsilon`.
pub fn check_performance_bound(
    mdp: &FiniteMdp,
    pi_old: &TabularDistributionPolicy,
    epsilons: &[f64],
) -> Result<PerformanceReport> {
    if !mdp.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    if !pi_old.is_full_support() {
        return Err(Error::InvalidDistribution(
            "data-collection policy must have full support".into(),
        ));
    }
    let star = optimal_reach_policy(mdp)?;
    let relabel = relabel_optimal_policy(pi_old, mdp)?;
    let j_relabel = exact_j(&relabel, mdp)?;
    let t = mdp.horizon() as f64;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let perturbed = perturb_policy(&relabel, epsilon);
        let j_perturbed = exact_j(&perturbed, mdp)?;
        let shortfall = star.j_star - j_perturbed;
        rows.push(PerformanceRow {
            epsilon,
            alpha: tv_alpha(&perturbed, &relabel)?,
            j_perturbed,
            shortfall,
            bound: epsilon * t,
            holds: shortfall <= epsilon * t + TOLERANCE,
        });
    }
    Ok(PerformanceReport {
        j_star: star.j_star,
        j_relabel_optimal: j_relabel,
        optimal_matches: (star.j_star - j_relabel).abs() <= TOLERANCE,
        rows,
    })
}
