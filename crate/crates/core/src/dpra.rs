//! Per-slot drift-plus-penalty minimization by block-coordinate descent.
//!
//! Each slot solves
//!
//! ```text
//! min  V (max_m chain_m + tau_bloc) + sum_j (S_j - Q_j) U_j
//! s.t. C1 (partition range), C2 (share cap), C3 (mining cap),
//!      C4 (gateway energy), C5 (AP energy)
//! ```
//!
//! over the partition points l, the inference shares f^A, and the mining
//! frequencies f^bloc. The three blocks are optimized in turn (mining,
//! shares, partition); each subproblem starts from the incumbent block
//! and never returns anything worse, so the objective is nonincreasing
//! across rounds and the loop stops on relative improvement below
//! `bcd_tol` or after `bcd_max_rounds` rounds.
//!
//! The blocks cannot renegotiate how an AP's energy arrival splits
//! between inference and mining: the mining solve spends whatever the
//! current shares leave over, and the share solve spends whatever the
//! mining block leaves over, so the split the descent starts from is
//! the split it keeps. Each slot therefore picks its initial equal-share
//! levels by a direct search on the objective before the first round.

use crate::consensus;
use crate::error::Result;
use crate::queues::AuxQueues;
use crate::solver::{fa, fbloc, partition};
pub use crate::solver::{
    BlockModel, Decision, FeasMode, LyapunovParams, ObjectiveSpec, Slot, SolveStats,
};

/// Everything the harness records about one optimized slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotMetrics {
    pub t: u64,
    /// Slowest gateway chain (seconds).
    pub chain_max: f64,
    /// Block confirmation time (seconds).
    pub tau_bloc: f64,
    /// chain_max + tau_bloc.
    pub latency: f64,
    /// Per-AP offloaded FLOPs.
    pub o: Vec<f64>,
    /// Per-AP reputation U_j.
    pub u: Vec<f64>,
    /// Gateway-side inference energy (execution plus uplink), summed.
    pub e_inf_gateway: f64,
    /// AP-side inference energy, summed.
    pub e_inf_ap: f64,
    /// Mining energy, summed over APs.
    pub e_bloc: f64,
    /// AP-side inference energy per AP.
    pub e_inf_ap_per: Vec<f64>,
    /// Mining energy per AP.
    pub e_bloc_per: Vec<f64>,
    /// Drift-plus-penalty value of the returned decision.
    pub objective: f64,
    /// Objective after each completed descent round.
    pub rounds_obj: Vec<f64>,
    /// Largest signed constraint slack of the returned decision.
    pub feas_worst: f64,
    pub stats: SolveStats,
}

/// Midpoint partition rule: half the layers stay local, rounded up.
pub fn midpoint_partition(slot: &Slot) -> Vec<usize> {
    (0..slot.scn.n_devices())
        .map(|n| slot.scn.layers_of(n).div_ceil(2))
        .collect()
}

/// Drift-plus-penalty value of candidate shares at partition `l` with
/// the mining block re-solved from scratch, or None when the candidate
/// admits no block race (for instance when nothing has energy to mine).
fn split_value(
    slot: &Slot,
    l: &[usize],
    f_a: &[f64],
    queues: &AuxQueues,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    stats: &mut SolveStats,
) -> Option<f64> {
    let mut cand = Decision {
        l: l.to_vec(),
        f_a: f_a.to_vec(),
        f_bloc: slot.scn.aps.iter().map(|ap| ap.f_max).collect(),
    };
    cand.f_bloc = fbloc::solve_fbloc(slot, &cand, queues, spec, params, stats).ok()?;
    slot.objective(&cand, queues, spec, params.v).ok()
}

/// Context shared by every probe of the share-level search.
struct SplitSearch<'a> {
    slot: &'a Slot<'a>,
    l: &'a [usize],
    queues: &'a AuxQueues,
    spec: &'a ObjectiveSpec,
    params: &'a LyapunovParams,
}

impl SplitSearch<'_> {
    /// Sets every member share to `x`, scores the split, and keeps the
    /// best (value, level) pair; unscorable candidates count as infinite.
    fn probe(
        &self,
        members: &[usize],
        x: f64,
        f_a: &mut [f64],
        best: &mut Option<(f64, f64)>,
        stats: &mut SolveStats,
    ) -> f64 {
        for &m in members {
            f_a[m] = x;
        }
        match split_value(self.slot, self.l, f_a, self.queues, self.spec, self.params, stats) {
            Some(v) => {
                if best.map_or(true, |(bv, _)| v < bv) {
                    *best = Some((v, x));
                }
                v
            }
            None => f64::INFINITY,
        }
    }
}

/// Seed decision at partition `l`: mining at full frequency and equal
/// shares across each AP's working members, the level chosen per AP by a
/// log-grid plus golden-section search on [`split_value`]. The level
/// controls how the AP's arrival splits between inference and mining,
/// which the descent itself cannot revisit, so it is the one knob worth
/// a direct search. Gateways with no AP-side work sit at the floor.
fn seed_decision(
    slot: &Slot,
    l: Vec<usize>,
    queues: &AuxQueues,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    stats: &mut SolveStats,
) -> Decision {
    const GRID: usize = 12;
    const REFINE: usize = 12;
    const PASSES: usize = 2;
    const INV_PHI: f64 = 0.618_033_988_749_895;

    let scn = slot.scn;
    let mut f_a = vec![0.0; scn.n_gateways()];
    // Per AP: the working members and the top of their level box.
    let mut boxes: Vec<(Vec<usize>, f64)> = Vec::with_capacity(scn.n_aps());
    for (j, ap) in scn.aps.iter().enumerate() {
        let mut working = Vec::new();
        let mut work_sum = 0.0;
        let mut idle = 0usize;
        for &m in &scn.ap_gateways[j] {
            if slot.suffix_work(m, &l) > 0.0 {
                work_sum += slot.suffix_work(m, &l);
                working.push(m);
            } else {
                f_a[m] = ap.f_min;
                idle += 1;
            }
        }
        if working.is_empty() {
            boxes.push((working, 0.0));
            continue;
        }
        // Level at which inference burns `frac` of the arrival.
        let level_at =
            |frac: f64| (frac * slot.real.e_a[j] * ap.phi_a / (ap.v_a * work_sum)).sqrt();
        // The scenario guarantees the cap covers every member at the
        // floor, so only the energy end can push the box below f_min.
        let cap = (ap.f_max - idle as f64 * ap.f_min) / working.len() as f64;
        let hi = cap.min(level_at(0.95));
        let start = if hi < ap.f_min {
            // The arrival cannot afford even floor shares; spend half of
            // it and let the descent surface what remains feasible.
            level_at(0.5).min(cap)
        } else {
            level_at(0.5).clamp(ap.f_min, hi)
        };
        for &m in &working {
            f_a[m] = start;
        }
        boxes.push((working, hi));
    }

    let search = SplitSearch { slot, l: &l, queues, spec, params };
    for _pass in 0..PASSES {
        for (j, (working, hi)) in boxes.iter().enumerate() {
            let lo = scn.aps[j].f_min;
            if working.is_empty() || !(*hi > lo) {
                continue;
            }
            let (lna, lnb) = (lo.ln(), hi.ln());
            let mut best: Option<(f64, f64)> = None;
            for k in 0..GRID {
                let x = (lna + (lnb - lna) * k as f64 / (GRID - 1) as f64).exp();
                search.probe(working, x, &mut f_a, &mut best, stats);
            }
            let Some((_, coarse)) = best else { continue };
            // Golden-section refinement one grid step around the winner.
            let step = (lnb - lna) / (GRID - 1) as f64;
            let mut a = (coarse.ln() - step).max(lna);
            let mut b = (coarse.ln() + step).min(lnb);
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let mut vc = search.probe(working, c.exp(), &mut f_a, &mut best, stats);
            let mut vd = search.probe(working, d.exp(), &mut f_a, &mut best, stats);
            for _ in 0..REFINE {
                if vc <= vd {
                    b = d;
                    d = c;
                    vd = vc;
                    c = b - INV_PHI * (b - a);
                    vc = search.probe(working, c.exp(), &mut f_a, &mut best, stats);
                } else {
                    a = c;
                    c = d;
                    vc = vd;
                    d = a + INV_PHI * (b - a);
                    vd = search.probe(working, d.exp(), &mut f_a, &mut best, stats);
                }
            }
            let (_, level) = best.expect("coarse winner exists");
            for &m in working {
                f_a[m] = level;
            }
        }
    }

    let f_bloc = scn.aps.iter().map(|ap| ap.f_max).collect();
    Decision { l, f_a, f_bloc }
}

/// Scales each AP's member shares down so its inference spend is at most
/// `fraction` of the slot's energy arrival. Inference energy is quadratic
/// in a uniform share scaling, so the factor is a square root.
pub fn scale_shares_to_budget(slot: &Slot, dec: &mut Decision, fraction: f64) {
    let e_exe = slot.ap_exec_energies(&dec.l, &dec.f_a);
    for (j, &spend) in e_exe.iter().enumerate() {
        let budget = fraction * slot.real.e_a[j];
        if spend > budget {
            let s = if spend > 0.0 { (budget / spend).sqrt() } else { 0.0 };
            for &m in &slot.scn.ap_gateways[j] {
                dec.f_a[m] *= s;
            }
        }
    }
}

/// What the descent does with the partition block each round.
#[derive(Debug, Clone, Copy)]
pub enum PartitionPlan<'p> {
    /// Re-optimize the partition points every round.
    Optimize,
    /// Hold the partition points at the given assignment.
    Fixed(&'p [usize]),
}

/// One optimized slot. Only the partition points warm-start: `prev`
/// carries them forward (midpoint rule on a cold start), a
/// [`PartitionPlan::Fixed`] plan pins them outright. Shares and mining
/// frequencies are re-seeded fresh each slot because the arrivals they
/// split are fresh.
pub fn optimize_slot(
    slot: &Slot,
    queues: &AuxQueues,
    prev: Option<&Decision>,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    plan: PartitionPlan<'_>,
) -> Result<(Decision, SlotMetrics)> {
    let mut stats = SolveStats::default();
    let l = match plan {
        PartitionPlan::Fixed(l) => l.to_vec(),
        PartitionPlan::Optimize => match prev {
            Some(p) => p.l.clone(),
            None => midpoint_partition(slot),
        },
    };
    let mut dec = seed_decision(slot, l, queues, spec, params, &mut stats);

    let mut best: Option<(f64, Decision)> = None;
    let mut rounds_obj = Vec::new();
    let mut prev_obj = f64::INFINITY;
    for _round in 0..params.bcd_max_rounds {
        dec.f_bloc = fbloc::solve_fbloc(slot, &dec, queues, spec, params, &mut stats)?;
        dec.f_a = fa::solve_fa(slot, &dec, queues, spec, params, &mut stats)?;
        if let PartitionPlan::Optimize = plan {
            dec.l = partition::solve_partition(slot, &dec, queues, spec, params, &mut stats)?;
        }
        let obj = slot.objective(&dec, queues, spec, params.v)?;
        rounds_obj.push(obj);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, dec.clone()));
        }
        if prev_obj.is_finite() && prev_obj - obj <= params.bcd_tol * prev_obj.abs().max(1.0) {
            break;
        }
        prev_obj = obj;
    }
    let (objective, dec) = best.expect("at least one descent round");

    let metrics = finish_metrics(slot, &dec, spec, objective, rounds_obj, stats)?;
    Ok((dec, metrics))
}

pub(crate) fn finish_metrics(
    slot: &Slot,
    dec: &Decision,
    spec: &ObjectiveSpec,
    objective: f64,
    rounds_obj: Vec<f64>,
    stats: SolveStats,
) -> Result<SlotMetrics> {
    let scn = slot.scn;
    let chain_max = (0..scn.n_gateways())
        .map(|m| slot.chain_time(m, &dec.l, dec.f_a[m]))
        .fold(0.0_f64, f64::max);
    let o = slot.offload_volumes(&dec.l);
    let (u, _, tau_bloc) = slot.race(spec, &o, &dec.f_bloc)?;
    let e_inf_gateway = (0..scn.n_gateways())
        .map(|m| slot.gateway_energy(m, &dec.l))
        .sum();
    let e_inf_ap_per = slot.ap_exec_energies(&dec.l, &dec.f_a);
    let e_bloc_per: Vec<f64> = scn
        .aps
        .iter()
        .zip(&dec.f_bloc)
        .map(|(ap, &f)| consensus::block_energy(ap.v_a, tau_bloc, f))
        .collect();
    let e_inf_ap = e_inf_ap_per.iter().sum();
    let e_bloc = e_bloc_per.iter().sum();
    let feas_worst = slot.feasibility(dec, spec)?.worst();
    Ok(SlotMetrics {
        t: slot.t,
        chain_max,
        tau_bloc,
        latency: chain_max + tau_bloc,
        o,
        u,
        e_inf_gateway,
        e_inf_ap,
        e_bloc,
        e_inf_ap_per,
        e_bloc_per,
        objective,
        rounds_obj,
        feas_worst,
        stats,
    })
}

/// The dynamic policy: full descent over all three blocks.
pub fn dpra_step(
    slot: &Slot,
    queues: &AuxQueues,
    prev: Option<&Decision>,
    params: &LyapunovParams,
) -> Result<(Decision, SlotMetrics)> {
    optimize_slot(
        slot,
        queues,
        prev,
        &ObjectiveSpec::reputation(),
        params,
        PartitionPlan::Optimize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SlotRealization;
    use crate::solver::tests::{fixture, realization};

    fn params() -> LyapunovParams {
        LyapunovParams { v: 10.0, ..LyapunovParams::default() }
    }

    fn queues() -> AuxQueues {
        AuxQueues::init(1, 5.0, 15.0)
    }

    #[test]
    fn seeded_shares_fit_budget_and_cap() {
        let scn = fixture();
        let mut real = realization();
        real.e_a = vec![0.08];
        let slot = Slot::build(&scn, real, 0).unwrap();
        let mut stats = SolveStats::default();
        let dec = seed_decision(
            &slot,
            midpoint_partition(&slot),
            &queues(),
            &ObjectiveSpec::reputation(),
            &params(),
            &mut stats,
        );
        // Midpoint of a 3-layer model is 2, and both gateways carry work
        // there, so they share one common level inside the box.
        assert_eq!(dec.l, vec![2, 2]);
        assert_eq!(dec.f_a[0], dec.f_a[1]);
        assert!(dec.f_a.iter().all(|&f| f >= scn.aps[0].f_min));
        let sum: f64 = dec.f_a.iter().sum();
        assert!(sum <= scn.aps[0].f_max * (1.0 + 1e-9));
        // The spend leaves the mining block a live budget.
        let spend: f64 = slot.ap_exec_energies(&dec.l, &dec.f_a).iter().sum();
        assert!(spend > 0.0);
        assert!(spend <= 0.95 * 0.08 * (1.0 + 1e-9));
    }

    #[test]
    fn seeded_level_beats_the_box_ends() {
        let scn = fixture();
        let slot = Slot::build(&scn, realization(), 0).unwrap();
        let p = params();
        let spec = ObjectiveSpec::reputation();
        let q = queues();
        let mut stats = SolveStats::default();
        let l = midpoint_partition(&slot);
        let dec = seed_decision(&slot, l.clone(), &q, &spec, &p, &mut stats);
        let val = split_value(&slot, &l, &dec.f_a, &q, &spec, &p, &mut stats).unwrap();
        let ap = &scn.aps[0];
        let work: f64 = (0..2).map(|m| slot.suffix_work(m, &l)).sum();
        let hi = (ap.f_max / 2.0)
            .min((0.95 * slot.real.e_a[0] * ap.phi_a / (ap.v_a * work)).sqrt());
        for level in [ap.f_min, hi] {
            let v = split_value(&slot, &l, &[level, level], &q, &spec, &p, &mut stats)
                .unwrap();
            assert!(val <= v * (1.0 + 1e-9), "seed {val} vs level {level}: {v}");
        }
    }

    #[test]
    fn descent_rounds_never_increase_objective() {
        let scn = fixture();
        let slot = Slot::build(&scn, realization(), 0).unwrap();
        let (_, m) = dpra_step(&slot, &queues(), None, &params()).unwrap();
        for w in m.rounds_obj.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9) + 1e-12,
                "objective rose between rounds: {:?}",
                m.rounds_obj
            );
        }
        assert!(m.objective <= m.rounds_obj[0]);
    }

    #[test]
    fn returned_decision_is_feasible() {
        let scn = fixture();
        let slot = Slot::build(&scn, realization(), 0).unwrap();
        let (dec, m) = dpra_step(&slot, &queues(), None, &params()).unwrap();
        assert!(m.feas_worst <= 1e-9 * (1.0 + 50.0), "worst slack {}", m.feas_worst);
        assert_eq!(m.stats.c4_violations, 0);
        assert_eq!(m.stats.c5_violations, 0);
        // The decision and metrics agree.
        let obj = slot.objective(&dec, &queues(), &ObjectiveSpec::reputation(), 10.0).unwrap();
        assert_eq!(obj, m.objective);
    }

    #[test]
    fn warm_start_survives_budget_shrink() {
        let scn = fixture();
        let rich = SlotRealization { e_a: vec![1e4], ..realization() };
        let slot0 = Slot::build(&scn, rich, 0).unwrap();
        let (dec0, _) = dpra_step(&slot0, &queues(), None, &params()).unwrap();
        // Next slot's AP arrival collapses by six orders of magnitude.
        let poor = SlotRealization { e_a: vec![0.01], ..realization() };
        let slot1 = Slot::build(&scn, poor, 1).unwrap();
        let (dec1, m1) = dpra_step(&slot1, &queues(), Some(&dec0), &params()).unwrap();
        let spend: f64 = slot1.ap_exec_energies(&dec1.l, &dec1.f_a).iter().sum();
        assert!(spend + m1.e_bloc <= 0.01 * (1.0 + 1e-6));
    }

    #[test]
    fn fixed_partition_plan_pins_the_assignment() {
        let scn = fixture();
        let slot = Slot::build(&scn, realization(), 0).unwrap();
        let spec = ObjectiveSpec::reputation();
        let mid = midpoint_partition(&slot);
        let (dec, _) =
            optimize_slot(&slot, &queues(), None, &spec, &params(), PartitionPlan::Fixed(&mid))
                .unwrap();
        assert_eq!(dec.l, mid);
        // A warm start cannot move the pinned assignment either.
        let warm = Decision { l: vec![1, 1], ..dec.clone() };
        let pin = vec![1, 3];
        let (dec2, _) = optimize_slot(
            &slot,
            &queues(),
            Some(&warm),
            &spec,
            &params(),
            PartitionPlan::Fixed(&pin),
        )
        .unwrap();
        assert_eq!(dec2.l, pin);
    }

    #[test]
    fn partition_round_never_regresses_from_feasible_midpoint() {
        // With gateway budgets that can afford the midpoint, both plans
        // share an identical first round up to the partition step, so the
        // full plan's result is bounded by the frequency-only plan's
        // first-round objective.
        let scn = fixture();
        let real = SlotRealization { e_g: vec![80.0, 80.0], ..realization() };
        let slot = Slot::build(&scn, real.clone(), 0).unwrap();
        let spec = ObjectiveSpec::reputation();
        let mid = midpoint_partition(&slot);
        let (_, m_full) =
            optimize_slot(&slot, &queues(), None, &spec, &params(), PartitionPlan::Optimize)
                .unwrap();
        let (_, m_freq) =
            optimize_slot(&slot, &queues(), None, &spec, &params(), PartitionPlan::Fixed(&mid))
                .unwrap();
        assert!(m_full.objective <= m_freq.rounds_obj[0] * (1.0 + 1e-9));
        assert_eq!(m_full.stats.c4_violations, 0);
    }

    #[test]
    fn deterministic() {
        let scn = fixture();
        let slot = Slot::build(&scn, realization(), 4).unwrap();
        let a = dpra_step(&slot, &queues(), None, &params()).unwrap();
        let b = dpra_step(&slot, &queues(), None, &params()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
