//! Analytic bounds: the per-slot drift inequality and the latency floor.
//!
//! Both are pure functions of the scenario and a slot's realization, so
//! simulation runs can audit them pathwise: the drift of the quadratic
//! Lyapunov function L = (1/2) sum_j (Q_j^2 + S_j^2) is bounded by a
//! constant H plus queue-weighted reputation terms, and no decision can
//! push a slot's latency below the floor built from the fastest
//! processors, the smallest payloads, and full-offload reputations.

use crate::consensus;
use crate::env::{self, Scenario};
use crate::queues::AuxQueues;

/// Drift constant: sum_j g(O_j^full)^2 + (J/2)(U_min^2 + U_max^2), where
/// O_j^full is AP j's offloaded FLOPs if every DT offloaded everything
/// this slot (arrivals `d`). Bounds (1/2)[(U_min - U_j)^2 + (U_j -
/// U_max)^2] for any U_j in [0, g(O_j^full)].
pub fn lemma1_h(scn: &Scenario, d: &[f64]) -> f64 {
    let rep = &scn.reputation;
    let mut h = 0.0;
    for gateways in &scn.ap_gateways {
        let o_full: f64 = gateways
            .iter()
            .flat_map(|&m| scn.gateway_devices[m].iter())
            .map(|&n| d[n] * scn.model_of(n).total_flops())
            .sum();
        let u = consensus::reputation(rep, o_full);
        h += u * u;
    }
    h + scn.n_aps() as f64 / 2.0 * (rep.u_min * rep.u_min + rep.u_max * rep.u_max)
}

/// One slot's drift audit: both sides of the inequality
/// L(t+1) - L(t) <= H + sum_j [Q_j (U_min - U_j) + S_j (U_j - U_max)].
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// L(t), from the queues before the update.
    pub l_before: f64,
    /// L(t+1), from the queues after the update.
    pub l_after: f64,
    /// L(t+1) - L(t).
    pub delta_l_pathwise: f64,
    pub h_const: f64,
    /// H plus the queue-weighted reputation terms.
    pub bound_rhs: f64,
}

impl DriftReport {
    /// True when the drift inequality holds up to rounding slack.
    pub fn holds(&self, tol: f64) -> bool {
        self.delta_l_pathwise <= self.bound_rhs + tol * self.bound_rhs.abs().max(1.0)
    }
}

/// Evaluates the drift inequality for one queue update with reputations
/// `u` and constant `h` (from [`lemma1_h`] at this slot's arrivals).
pub fn drift_report(
    before: &AuxQueues,
    after: &AuxQueues,
    u: &[f64],
    u_min: f64,
    u_max: f64,
    h: f64,
) -> DriftReport {
    let l_before = before.lyapunov();
    let l_after = after.lyapunov();
    let cross: f64 = (0..before.len())
        .map(|j| before.q[j] * (u_min - u[j]) + before.s[j] * (u[j] - u_max))
        .sum();
    DriftReport {
        l_before,
        l_after,
        delta_l_pathwise: l_after - l_before,
        h_const: h,
        bound_rhs: h + cross,
    }
}

/// Latency floor: the slowest gateway's workload on the fastest processor
/// in the system plus its cheapest payload on its mean channel, plus the
/// fastest possible block (every AP mining at the global frequency cap
/// with full-offload reputation at mean arrivals).
pub fn theorem1_tau_min(scn: &Scenario) -> f64 {
    let best_gateway = scn
        .gateways
        .iter()
        .map(|g| g.phi_g * g.f_g)
        .fold(0.0_f64, f64::max);
    let best_ap = scn.aps.iter().map(|ap| ap.phi_a).fold(0.0_f64, f64::max)
        * scn.aps.iter().map(|ap| ap.f_max).fold(0.0_f64, f64::max);
    let best_rate = best_gateway.max(best_ap);

    let mut chain = 0.0_f64;
    for (m, gw) in scn.gateways.iter().enumerate() {
        let mean_rate = env::uplink_rate(&scn.channel, gw, 1.0, scn.channel.interference_mean);
        let mut flops = 0.0;
        let mut payload = 0.0;
        for &n in &scn.gateway_devices[m] {
            let model = scn.model_of(n);
            flops += scn.arrival_mean[n] * model.total_flops();
            let min_bits = (1..=model.len())
                .map(|l| model.output_bits(l).expect("partition point in range"))
                .fold(f64::INFINITY, f64::min);
            payload += scn.arrival_mean[n] * min_bits;
        }
        if flops == 0.0 && payload == 0.0 {
            continue;
        }
        chain = chain.max(flops / best_rate + payload / mean_rate);
    }

    let rep = &scn.reputation;
    let f_max = scn.aps.iter().map(|ap| ap.f_max).fold(0.0_f64, f64::max);
    let rate_sum: f64 = scn
        .ap_gateways
        .iter()
        .map(|gateways| {
            let o_full: f64 = gateways
                .iter()
                .flat_map(|&m| scn.gateway_devices[m].iter())
                .map(|&n| scn.arrival_mean[n] * scn.model_of(n).total_flops())
                .sum();
            (rep.beta + rep.alpha * consensus::reputation(rep, o_full)).exp()
        })
        .sum();
    chain + rep.quantile_factor() / (f_max * rate_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queues::update_queues;
    use crate::rng;
    use crate::solver::tests::fixture;
    use rand::Rng;

    #[test]
    fn h_with_no_arrivals_is_the_queue_constant() {
        let scn = fixture();
        let h = lemma1_h(&scn, &[0.0, 0.0]);
        // Affine g maps 0 to 0; only (J/2)(U_min^2 + U_max^2) remains.
        assert!((h - 0.5 * (25.0 + 225.0)).abs() < 1e-12);
        assert!(h > 0.0);
    }

    #[test]
    fn drift_hand_fixture() {
        // J=1, Q=3, S=1, U=30, bounds (25, 75): Q' = 0, S' = 0, so the
        // drift is -5; the right side is 3(25-30) + 1(30-75) + H.
        let before = AuxQueues { q: vec![3.0], s: vec![1.0] };
        let after = update_queues(&before, &[30.0], 25.0, 75.0);
        assert_eq!(after.q, vec![0.0]);
        assert_eq!(after.s, vec![0.0]);
        let h = 100.0;
        let rep = drift_report(&before, &after, &[30.0], 25.0, 75.0, h);
        assert!((rep.delta_l_pathwise - (-5.0)).abs() < 1e-12);
        assert!((rep.bound_rhs - (h - 60.0)).abs() < 1e-12);
        assert!(rep.holds(0.0));
    }

    #[test]
    fn zero_everything_is_bounded_by_h() {
        let scn = fixture();
        let before = AuxQueues { q: vec![0.0], s: vec![0.0] };
        let after = update_queues(&before, &[0.0], scn.reputation.u_min, scn.reputation.u_max);
        let h = lemma1_h(&scn, &[0.0, 0.0]);
        let rep = drift_report(&before, &after, &[0.0], 5.0, 15.0, h);
        // The deficit queue refills to U_min, so the drift is (1/2) 5^2,
        // well under H = 125.
        assert_eq!(rep.delta_l_pathwise, 12.5);
        assert!(rep.holds(0.0));
    }

    /// The inequality is an identity-level consequence of the update
    /// rule whenever U_j stays below the full-offload reputation, so it
    /// must survive any queue state and arrival draw.
    #[test]
    fn drift_inequality_holds_on_random_states() {
        let scn = fixture();
        let rep = &scn.reputation;
        let mut r = rng::validation_rng(31, 0);
        for _ in 0..5000 {
            let d = [r.gen_range(0.0..10.0), r.gen_range(0.0..10.0)];
            let o_full: f64 = d[0] * 64.0 + d[1] * 64.0;
            let u_cap = consensus::reputation(rep, o_full);
            let u = [r.gen_range(0.0..=u_cap.max(f64::MIN_POSITIVE))];
            let before = AuxQueues {
                q: vec![r.gen_range(0.0..100.0)],
                s: vec![r.gen_range(0.0..100.0)],
            };
            let after = update_queues(&before, &u, rep.u_min, rep.u_max);
            let h = lemma1_h(&scn, &d);
            let report = drift_report(&before, &after, &u, rep.u_min, rep.u_max, h);
            assert!(report.holds(1e-12), "violated: {report:?} d={d:?} u={u:?}");
        }
    }

    #[test]
    fn tau_min_hand_evaluation() {
        let scn = fixture();
        // Fastest processor: AP at phi_a * f_max = 64 beats both
        // gateways' phi_g * f_g = 4.
        let best_rate = 64.0;
        // Mean channels: rho = 1, eta = 0 give SNR 2 and 4.
        let r0 = 8.0 * 3.0_f64.log2();
        let r1 = 8.0 * 5.0_f64.log2();
        let chain0 = 4.0 * 64.0 / best_rate + 4.0 * 4.0 / r0;
        let chain1 = 4.0 * 64.0 / best_rate + 4.0 * 4.0 / r1;
        // Full offload at mean arrivals: O = 8 * 64, U = 51.2.
        let rate_sum = (-2.0 + 0.01 * 51.2_f64).exp();
        let want = chain0.max(chain1) + -(0.1_f64.ln()) / (16.0 * rate_sum);
        assert!((theorem1_tau_min(&scn) - want).abs() < 1e-12);
    }

    #[test]
    fn tau_min_monotone_in_frequency_cap() {
        let scn = fixture();
        let base = theorem1_tau_min(&scn);
        let mut faster = fixture();
        for ap in &mut faster.aps {
            ap.f_max *= 2.0;
        }
        assert!(theorem1_tau_min(&faster) <= base);
    }
}
