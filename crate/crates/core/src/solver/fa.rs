//! Inference frequency-share subproblem.
//!
//! With partition points and mining frequencies fixed, the block time is
//! a constant and the shares f_m only move the makespan
//!
//! ```text
//! max_m  fix_m + W_m / (phi_A f_m)
//! ```
//!
//! where fix_m is gateway m's execution + offload time and W_m its
//! AP-side FLOPs. For a candidate makespan lambda, the cheapest share
//! that keeps gateway m at or below lambda is
//!
//! ```text
//! need_m(lambda) = W_m / (phi_A (lambda - fix_m))
//! ```
//!
//! (infinite when lambda <= fix_m, zero handled via the share floor).
//! Needs shrink as lambda grows, so feasibility against the per-AP sum
//! cap and energy budget is monotone and a bisection finds the least
//! feasible makespan. Zero-workload gateways sit at the floor frequency,
//! which costs no energy.

use crate::error::{Result, SimError};
use crate::queues::AuxQueues;
use crate::solver::{Decision, LyapunovParams, ObjectiveSpec, Slot, SolveStats};

struct Workload {
    /// Per-gateway fixed chain part (execution + offload), s.
    fix: Vec<f64>,
    /// Per-gateway AP-side FLOPs.
    work: Vec<f64>,
    /// Per-AP energy left for inference after mining, J.
    e_inf: Vec<f64>,
}

fn workload(slot: &Slot, dec: &Decision, spec: &ObjectiveSpec) -> Result<Workload> {
    let scn = slot.scn;
    let fix = (0..scn.n_gateways())
        .map(|m| {
            scn.gateway_devices[m]
                .iter()
                .map(|&n| slot.fixed_time[n][dec.l[n] - 1])
                .sum()
        })
        .collect();
    let work = (0..scn.n_gateways())
        .map(|m| slot.suffix_work(m, &dec.l))
        .collect();
    let o = slot.offload_volumes(&dec.l);
    let (_, _, tau_bloc) = slot.race(spec, &o, &dec.f_bloc)?;
    let e_inf = (0..scn.n_aps())
        .map(|j| {
            let e_bloc =
                crate::consensus::block_energy(scn.aps[j].v_a, tau_bloc, dec.f_bloc[j]);
            let res = slot.real.e_a[j] - e_bloc;
            if res < -1e-9 * (1.0 + slot.real.e_a[j]) {
                return Err(SimError::Solver(format!(
                    "slot {}: AP {j} mining energy {e_bloc} exceeds arrival {}",
                    slot.t, slot.real.e_a[j]
                )));
            }
            Ok(res.max(0.0))
        })
        .collect::<Result<_>>()?;
    Ok(Workload { fix, work, e_inf })
}

/// Cheapest shares meeting makespan `lambda`, or None when some gateway
/// cannot meet it at all.
fn shares_at(slot: &Slot, w: &Workload, lambda: f64) -> Option<Vec<f64>> {
    let scn = slot.scn;
    let mut shares = Vec::with_capacity(scn.n_gateways());
    for m in 0..scn.n_gateways() {
        let floor = scn.aps[scn.gateway_ap[m]].f_min;
        if w.work[m] == 0.0 {
            shares.push(floor);
        } else {
            let slack = lambda - w.fix[m];
            if slack <= 0.0 {
                return None;
            }
            let need = w.work[m] / (scn.aps[scn.gateway_ap[m]].phi_a * slack);
            shares.push(need.max(floor));
        }
    }
    Some(shares)
}

fn feasible(slot: &Slot, w: &Workload, shares: &[f64]) -> bool {
    let scn = slot.scn;
    for j in 0..scn.n_aps() {
        let ap = &scn.aps[j];
        let mut sum = 0.0;
        let mut energy = 0.0;
        for &m in &scn.ap_gateways[j] {
            sum += shares[m];
            energy += ap.v_a * shares[m] * shares[m] / ap.phi_a * w.work[m];
        }
        if sum > ap.f_max * (1.0 + 1e-12) {
            return false;
        }
        if energy > w.e_inf[j] * (1.0 + 1e-9) + 1e-300 {
            return false;
        }
    }
    true
}

/// Minimizes the inference makespan over the per-gateway shares at fixed
/// `l` and `f_bloc`. The warm shares in `dec.f_a` seed the feasible end
/// of the bracket; the result is never worse than a feasible warm point.
pub fn solve_fa(
    slot: &Slot,
    dec: &Decision,
    _queues: &AuxQueues,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    stats: &mut SolveStats,
) -> Result<Vec<f64>> {
    let scn = slot.scn;
    let w = workload(slot, dec, spec)?;

    // Nobody can beat its solo chain with the whole AP to itself.
    let lo0 = (0..scn.n_gateways())
        .map(|m| {
            if w.work[m] == 0.0 {
                w.fix[m]
            } else {
                w.fix[m] + w.work[m] / (scn.aps[scn.gateway_ap[m]].phi_a * scn.aps[scn.gateway_ap[m]].f_max)
            }
        })
        .fold(0.0_f64, f64::max);
    let test = |lambda: f64| -> Option<Vec<f64>> {
        shares_at(slot, &w, lambda).filter(|s| feasible(slot, &w, s))
    };
    if let Some(shares) = test(lo0) {
        return Ok(shares);
    }

    // Feasible end: the warm assignment's own makespan, else expansion.
    let warm_lambda = (0..scn.n_gateways())
        .map(|m| slot.chain_time(m, &dec.l, dec.f_a[m]))
        .fold(0.0_f64, f64::max);
    let mut hi = if warm_lambda.is_finite() && warm_lambda > lo0 && test(warm_lambda).is_some() {
        warm_lambda
    } else {
        let mut hi = if lo0 > 0.0 { lo0 } else { 1e-12 };
        let mut found = false;
        for _ in 0..200 {
            hi *= 2.0;
            stats.bracket_expansions += 1;
            if test(hi).is_some() {
                found = true;
                break;
            }
        }
        if !found {
            return Err(SimError::Solver(format!(
                "slot {}: no feasible inference makespan (energy budget too small)",
                slot.t
            )));
        }
        hi
    };

    let mut lo = lo0;
    let mut iters = 0;
    while hi - lo > params.bisection_tol * hi {
        if iters >= params.bisection_max_iters {
            stats.bisection_cap_hits += 1;
            break;
        }
        iters += 1;
        let mid = 0.5 * (lo + hi);
        if test(mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(test(hi).expect("feasible end of bracket"))
}
