//! Block-mining frequency subproblem.
//!
//! With the partition points and inference shares held fixed, the only
//! objective term touched by the mining frequencies is the block time
//!
//! ```text
//! tau(f) = -ln(1-p0) / sum_j f_j / gamma_j
//! ```
//!
//! subject to 0 <= f_j <= f_max and the AP energy budget
//! v_j tau(f) f_j^3 <= E_j^A - (inference energy). The budget couples all
//! APs through tau, but pricing energy at a candidate block duration mu
//! decouples it: the best frequency at price mu is
//!
//! ```text
//! f_j(mu) = min{ f_max_j, (E_res_j / (v_j mu))^(1/3) }
//! ```
//!
//! and mu is achievable iff the resulting race finishes within mu, i.e.
//! phi(mu) = tau(f(mu)) <= mu. Achievability is monotone in mu, so a
//! bisection pins the optimum; the fixed point phi(mu*) = mu* is the
//! minimal self-consistent block time.

use crate::error::{Result, SimError};
use crate::queues::AuxQueues;
use crate::solver::{Decision, LyapunovParams, ObjectiveSpec, Slot, SolveStats};

/// Residual mining budgets E_j^A minus the inference energy of the
/// current shares. Negative residuals beyond roundoff are a contract
/// violation by the caller.
fn residual_energy(slot: &Slot, dec: &Decision) -> Result<Vec<f64>> {
    let e_exe = slot.ap_exec_energies(&dec.l, &dec.f_a);
    (0..slot.scn.n_aps())
        .map(|j| {
            let res = slot.real.e_a[j] - e_exe[j];
            if res < -1e-9 * (1.0 + slot.real.e_a[j]) {
                return Err(SimError::Solver(format!(
                    "slot {}: AP {j} inference energy {} exceeds arrival {}",
                    slot.t, e_exe[j], slot.real.e_a[j]
                )));
            }
            Ok(res.max(0.0))
        })
        .collect()
}

/// Best frequencies when block duration is priced at mu.
fn freqs_at(slot: &Slot, e_res: &[f64], mu: f64) -> Vec<f64> {
    slot.scn
        .aps
        .iter()
        .zip(e_res)
        .map(|(ap, &e)| ap.f_max.min((e / (ap.v_a * mu)).cbrt()))
        .collect()
}

/// Achieved block time of the priced frequencies (infinite when nothing
/// mines).
fn achieved_tau(slot: &Slot, inv_gamma: &[f64], f: &[f64]) -> f64 {
    let theta_hat: f64 = f.iter().zip(inv_gamma).map(|(&fj, &w)| fj * w).sum();
    if theta_hat > 0.0 {
        slot.scn.reputation.quantile_factor() / theta_hat
    } else {
        f64::INFINITY
    }
}

/// Minimizes the block time over the mining frequencies at fixed `l` and
/// `f_a`. The warm frequencies in `dec.f_bloc` seed the feasible end of
/// the bracket when they respect the energy budget; the result is never
/// worse than a feasible warm point.
pub fn solve_fbloc(
    slot: &Slot,
    dec: &Decision,
    _queues: &AuxQueues,
    spec: &ObjectiveSpec,
    params: &LyapunovParams,
    stats: &mut SolveStats,
) -> Result<Vec<f64>> {
    let scn = slot.scn;
    let e_res = residual_energy(slot, dec)?;
    if e_res.iter().all(|&e| e == 0.0) {
        return Err(SimError::NoMiner);
    }
    let o = slot.offload_volumes(&dec.l);
    let inv_gamma: Vec<f64> = o
        .iter()
        .map(|&oj| {
            spec.block
                .inv_gamma(scn, crate::consensus::reputation(&scn.reputation, oj))
        })
        .collect();

    // Energy-free optimum: every AP mines at f_max. No priced assignment
    // can beat it, so it brackets the optimum from below.
    let f_all_max: Vec<f64> = scn.aps.iter().map(|ap| ap.f_max).collect();
    let lo0 = achieved_tau(slot, &inv_gamma, &f_all_max);
    if !lo0.is_finite() {
        return Err(SimError::NoMiner);
    }
    let feasible = |mu: f64| -> (Vec<f64>, bool) {
        let f = freqs_at(slot, &e_res, mu);
        let tau = achieved_tau(slot, &inv_gamma, &f);
        (f, tau <= mu)
    };

    let (f_lo, lo_ok) = feasible(lo0);
    if lo_ok {
        return Ok(f_lo);
    }
    let mut lo = lo0;
    // Feasible end of the bracket: the warm point's own block time when
    // the warm point respects the budget, else geometric expansion.
    let warm_tau = achieved_tau(slot, &inv_gamma, &dec.f_bloc);
    let warm_ok = warm_tau.is_finite()
        && dec
            .f_bloc
            .iter()
            .zip(scn.aps.iter().zip(&e_res))
            .all(|(&f, (ap, &e))| {
                f <= ap.f_max * (1.0 + 1e-12)
                    && ap.v_a * warm_tau * f * f * f <= e * (1.0 + 1e-9) + 1e-300
            });
    let mut hi = if warm_ok && feasible(warm_tau).1 {
        warm_tau
    } else {
        let mut hi = lo0;
        let mut found = false;
        for _ in 0..200 {
            hi *= 2.0;
            stats.bracket_expansions += 1;
            if feasible(hi).1 {
                found = true;
                break;
            }
        }
        if !found {
            return Err(SimError::Solver(format!(
                "slot {}: block-time bracket not found above {lo0:e}",
                slot.t
            )));
        }
        hi
    };

    let mut iters = 0;
    while hi - lo > params.bisection_tol * hi {
        if iters >= params.bisection_max_iters {
            stats.bisection_cap_hits += 1;
            break;
        }
        iters += 1;
        let mid = 0.5 * (lo + hi);
        if feasible(mid).1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(freqs_at(slot, &e_res, hi))
}
