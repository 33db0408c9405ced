//! Comparison policies: frequency-only descent at a fixed partition rule
//! (WDPO) and full descent under a flat mining difficulty (WTCM).
//!
//! Both reuse the drift-plus-penalty engine so paired runs differ only in
//! the block they disable: WDPO never moves the partition points, WTCM
//! plans against a constant difficulty, which hides the reputation
//! feedback from its descent. Realized metrics always come from the
//! reputation model, because the deployed network's difficulty does not
//! change just because a policy ignores it. Reputations and queues are
//! tracked and reported for both, since the long-term reputation
//! constraint remains part of the system being measured.

use crate::consensus::ReputationParams;
use crate::dpra::{finish_metrics, optimize_slot, PartitionPlan, SlotMetrics};
use crate::error::Result;
use crate::queues::AuxQueues;
use crate::solver::{BlockModel, Decision, LyapunovParams, ObjectiveSpec, Slot};
use serde::{Deserialize, Serialize};

/// Partition rule for the policy that never optimizes partition points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedLRule {
    /// Half the layers stay local, rounded up.
    #[default]
    Midpoint,
    /// Everything offloads after the first layer.
    FullOffload,
    /// Everything runs locally.
    FullLocal,
}

impl FixedLRule {
    /// The per-DT assignment this rule picks for the scenario.
    pub fn assignment(&self, slot: &Slot) -> Vec<usize> {
        (0..slot.scn.n_devices())
            .map(|n| {
                let len = slot.scn.layers_of(n);
                match self {
                    FixedLRule::Midpoint => len.div_ceil(2),
                    FixedLRule::FullOffload => 1,
                    FixedLRule::FullLocal => len,
                }
            })
            .collect()
    }
}

/// Default flat difficulty: the reputation-model difficulty evaluated at
/// the midpoint of the reputation band, gamma = e^(-alpha (U_min +
/// U_max)/2 - beta).
pub fn default_wtcm_gamma(rep: &ReputationParams) -> f64 {
    (-rep.alpha * rep.u_mid() - rep.beta).exp()
}

/// Baseline selection, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineSpec {
    Wdpo {
        #[serde(default)]
        fixed_l_rule: FixedLRule,
    },
    Wtcm {
        /// Flat difficulty; when absent, [`default_wtcm_gamma`] applies.
        #[serde(default)]
        fixed_gamma: Option<f64>,
        /// Whether the (S - Q) U term stays in the per-slot objective.
        #[serde(default = "default_true")]
        queue_term: bool,
    },
}

fn default_true() -> bool {
    true
}

/// Frequency-only policy: partition points pinned by `rule`, mining and
/// share frequencies optimized as in the dynamic policy.
pub fn wdpo_step(
    slot: &Slot,
    queues: &AuxQueues,
    prev: Option<&Decision>,
    params: &LyapunovParams,
    rule: FixedLRule,
) -> Result<(Decision, SlotMetrics)> {
    let l = rule.assignment(slot);
    optimize_slot(
        slot,
        queues,
        prev,
        &ObjectiveSpec::reputation(),
        params,
        PartitionPlan::Fixed(&l),
    )
}

/// Flat-difficulty policy: full descent, but the planner prices every
/// AP's mining at the fixed gamma, so its view of the block time no
/// longer responds to offloading.
///
/// The returned metrics are what the decision actually costs: the
/// difficulty in the deployed network still follows reputation, so the
/// realized block time, objective, and feasibility are re-evaluated
/// under the reputation model. Only the descent history keeps the
/// planner's flat-difficulty values.
pub fn wtcm_step(
    slot: &Slot,
    queues: &AuxQueues,
    prev: Option<&Decision>,
    params: &LyapunovParams,
    gamma: f64,
    queue_term: bool,
) -> Result<(Decision, SlotMetrics)> {
    let spec = ObjectiveSpec { block: BlockModel::FixedGamma(gamma), queue_term };
    let (dec, planned) = optimize_slot(slot, queues, prev, &spec, params, PartitionPlan::Optimize)?;
    let realized = ObjectiveSpec::reputation();
    let objective = slot.objective(&dec, queues, &realized, params.v)?;
    let metrics =
        finish_metrics(slot, &dec, &realized, objective, planned.rounds_obj, planned.stats)?;
    Ok((dec, metrics))
}
