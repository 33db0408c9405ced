//! Virtual queues enforcing the two-sided long-term reputation constraint.
//!
//! Each AP carries two nonnegative accumulators: Q_j grows when reputation
//! falls short of U_min, S_j grows when it exceeds U_max. Keeping both
//! rate-stable is equivalent to keeping the time-average reputation inside
//! [U_min, U_max]:
//!
//! ```text
//! Q_j(t+1) = max{ Q_j(t) - U_j(t) + U_min, 0 }
//! S_j(t+1) = max{ S_j(t) + U_j(t) - U_max, 0 }
//! ```

use serde::{Deserialize, Serialize};

/// Per-AP auxiliary queue pair (Q, S).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxQueues {
    pub q: Vec<f64>,
    pub s: Vec<f64>,
}

impl AuxQueues {
    /// Initial backlog: every queue starts at the band midpoint
    /// (U_min + U_max) / 2.
    pub fn init(n_aps: usize, u_min: f64, u_max: f64) -> Self {
        let mid = 0.5 * (u_min + u_max);
        AuxQueues { q: vec![mid; n_aps], s: vec![mid; n_aps] }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Drift weight S_j - Q_j of AP j in the per-slot objective.
    pub fn weight(&self, j: usize) -> f64 {
        self.s[j] - self.q[j]
    }

    /// Lyapunov function value L = (1/2) sum_j (Q_j^2 + S_j^2).
    pub fn lyapunov(&self) -> f64 {
        0.5 * self
            .q
            .iter()
            .zip(&self.s)
            .map(|(&q, &s)| q * q + s * s)
            .sum::<f64>()
    }
}

/// One-slot queue update given the realized per-AP reputations.
pub fn update_queues(queues: &AuxQueues, u: &[f64], u_min: f64, u_max: f64) -> AuxQueues {
    let q = queues
        .q
        .iter()
        .zip(u)
        .map(|(&q, &uj)| (q - uj + u_min).max(0.0))
        .collect();
    let s = queues
        .s
        .iter()
        .zip(u)
        .map(|(&s, &uj)| (s + uj - u_max).max(0.0))
        .collect();
    AuxQueues { q, s }
}
